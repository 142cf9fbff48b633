//! Simulation protocol, baselines and ranking metrics.
//!
//! A study draws networks from a stochastic block model, estimates the network
//! from control samples, perturbs nodes in case samples and records where each
//! method ranks the true site(s).

mod baselines;
mod cv;
mod roc;
mod study;

pub use baselines::{hotelling_t2, separated_nf_rank, separated_precision, ttest_rank, SeparatedRanking};
pub use cv::{cv_mse_rank, prediction_mse, CvResult};
pub use roc::{roc_and_auc, RocCurve};
pub use study::{
    aggregate, edge_f1, network_seeds, run_multi_target_network, run_multi_target_study, run_single_target_network,
    run_single_target_study, NetworkOutcome, NetworkSeeds,
};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::EstimatorSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodId {
    MultiNf,
    SingleNf,
    SeparatedNf,
    SeqMultiNf,
    Hotelling,
    Ttest,
}

impl MethodId {
    pub const ALL: [MethodId; 6] = [
        MethodId::MultiNf,
        MethodId::SingleNf,
        MethodId::SeparatedNf,
        MethodId::SeqMultiNf,
        MethodId::Hotelling,
        MethodId::Ttest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::MultiNf => "multi_nf",
            MethodId::SingleNf => "single_nf",
            MethodId::SeparatedNf => "separated_nf",
            MethodId::SeqMultiNf => "seq_multi_nf",
            MethodId::Hotelling => "hotelling",
            MethodId::Ttest => "ttest",
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or(Error::InvalidConfig("unknown method name"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub p: usize,
    pub k: usize,
    /// Samples per condition.
    pub n: usize,
    pub block_sizes: Vec<usize>,
    pub theta_within: f64,
    pub theta_across: f64,
    pub rho_in: f64,
    pub rho_out: f64,
    pub snr: f64,
    /// SNR of a second perturbation in the second block (multi-target studies).
    pub second_snr: Option<f64>,
    pub n_networks: usize,
    pub seed: u64,
    /// Filter with the true precision instead of the estimate.
    pub use_true_precision: bool,
    /// Attribute used by the single-attribute methods.
    pub single_attribute: usize,
    pub estimator: EstimatorSettings,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            p: 20,
            k: 2,
            n: 50,
            block_sizes: vec![10, 10],
            theta_within: 0.4,
            theta_across: 0.2,
            rho_in: 0.8,
            rho_out: 0.2,
            snr: 0.2,
            second_snr: None,
            n_networks: 100,
            seed: 1,
            use_true_precision: false,
            single_attribute: 0,
            estimator: EstimatorSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Single perturbation, all methods.
    Table1,
    /// Two perturbations in separated blocks.
    Table3,
    /// Single perturbation, multi-attribute vs separated vs single-attribute NF.
    Table5,
    /// Single perturbation at low SNR.
    Supp,
}

impl Preset {
    pub fn config(self) -> SimConfig {
        match self {
            Preset::Table1 | Preset::Table5 => SimConfig::default(),
            Preset::Table3 => SimConfig { theta_across: 0.0, second_snr: Some(0.1), ..SimConfig::default() },
            Preset::Supp => SimConfig { snr: 0.05, ..SimConfig::default() },
        }
    }

    pub fn methods(self) -> Vec<MethodId> {
        match self {
            Preset::Table1 | Preset::Supp => {
                vec![MethodId::MultiNf, MethodId::SingleNf, MethodId::Hotelling, MethodId::Ttest]
            }
            Preset::Table3 => vec![MethodId::SeqMultiNf, MethodId::MultiNf, MethodId::Hotelling],
            Preset::Table5 => vec![MethodId::MultiNf, MethodId::SeparatedNf, MethodId::SingleNf],
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Preset::Table1),
            "table3" => Ok(Preset::Table3),
            "table5" => Ok(Preset::Table5),
            "supp" => Ok(Preset::Supp),
            _ => Err(Error::InvalidConfig("unknown preset")),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.k == 0 {
            return Err(Error::InvalidConfig("p and k must be positive"));
        }
        if self.block_sizes.iter().sum::<usize>() != self.p {
            return Err(Error::InvalidConfig("block sizes must sum to p"));
        }
        if self.n < self.k + 2 {
            return Err(Error::TooFewSamples { needed: self.k + 2, found: self.n });
        }
        if !(self.snr > 0.0) {
            return Err(Error::InvalidConfig("SNR must be positive"));
        }
        if let Some(s) = self.second_snr {
            if !(s > 0.0) {
                return Err(Error::InvalidConfig("second SNR must be positive"));
            }
            if self.block_sizes.len() < 2 || self.block_sizes[..2].contains(&0) {
                return Err(Error::InvalidConfig("two perturbations need two nonempty blocks"));
            }
        }
        if self.single_attribute >= self.k {
            return Err(Error::InvalidConfig("single attribute index must be below k"));
        }
        if self.n_networks == 0 {
            return Err(Error::InvalidConfig("at least one network is required"));
        }
        Ok(())
    }

    pub fn is_multi_target(&self) -> bool {
        self.second_snr.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: MethodId,
    /// `top1` for single-target studies, `top2` (both sites) for multi-target ones.
    pub metric: String,
    pub probability: f64,
    pub auc: f64,
    pub roc: Vec<(f64, f64)>,
    pub mean_rank: f64,
    pub n_replicates: usize,
    /// Networks skipped for this method because estimation did not converge.
    pub excluded_networks: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: SimConfig,
    pub methods: Vec<MethodReport>,
    /// Mean F1 of the estimated edge set against the true graph.
    pub mean_edge_f1: Option<f64>,
    /// Networks whose pipeline failed outright.
    pub failed_networks: usize,
    pub runtime_seconds: Option<f64>,
}

impl EvalReport {
    pub fn method(&self, m: MethodId) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }
}
