use std::str::FromStr;
use std::time::Instant;

use log::info;
use netfilter_core::evaluate::{network_seeds, EvalReport, MethodId, NetworkSeeds, Preset, SimConfig};
use serde::Serialize;

use super::{wrote, Context};
use crate::cli::SimulateArgs;
use crate::error::{CliError, Result};
use crate::io::{self, format_f64, Table};
use crate::parallel::run_study;

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    preset: Preset,
    methods: &'a [MethodId],
    config: &'a SimConfig,
    networks: Vec<NetworkSeeds>,
    outputs: [&'static str; 2],
}

pub(crate) fn config_from_args(a: &SimulateArgs) -> Result<(Preset, SimConfig, Vec<MethodId>)> {
    let preset: Preset = a.preset.into();
    let mut cfg = preset.config();
    if !a.blocks.is_empty() {
        let p: usize = a.blocks.iter().sum();
        if a.p.is_some_and(|q| q != p) {
            return Err(CliError::config("--p does not match the sum of --blocks"));
        }
        cfg.block_sizes = a.blocks.clone();
        cfg.p = p;
    } else if let Some(p) = a.p {
        cfg.block_sizes = vec![p - p / 2, p / 2];
        cfg.p = p;
    }
    macro_rules! set {
        ($($field:ident <- $arg:expr),*) => {
            $(if let Some(v) = $arg { cfg.$field = v; })*
        };
    }
    set!(k <- a.k, n <- a.n, rho_in <- a.rho_in, rho_out <- a.rho_out, snr <- a.snr,
        theta_within <- a.theta_within, theta_across <- a.theta_across, n_networks <- a.networks,
        seed <- a.seed, single_attribute <- a.single_attribute);
    if a.second_snr.is_some() {
        cfg.second_snr = a.second_snr;
    }
    cfg.use_true_precision |= a.true_precision;
    cfg.estimator = a.estimator.settings();
    let methods = if a.methods.is_empty() {
        preset.methods()
    } else {
        a.methods
            .iter()
            .map(|m| MethodId::from_str(m.trim()).map_err(|_| CliError::config(format!("--methods: unknown method '{m}'"))))
            .collect::<Result<Vec<_>>>()?
    };
    cfg.validate()?;
    Ok((preset, cfg, methods))
}

fn roc_table(report: &EvalReport) -> Table {
    let mut t = Table::new(&["method", "k", "x", "y"]);
    for m in &report.methods {
        for (k, &(x, y)) in m.roc.iter().enumerate() {
            t.push(vec![m.method.to_string(), k.to_string(), format_f64(x), format_f64(y)]);
        }
    }
    t
}

pub fn simulate(a: &SimulateArgs, ctx: &Context) -> Result<()> {
    let (preset, cfg, methods) = config_from_args(a)?;
    let out = io::prepare_output_dir(&a.out)?;
    let start = Instant::now();
    let mut report = run_study(&cfg, &methods, ctx.threads)?;
    if ctx.timing {
        report.runtime_seconds = Some(start.elapsed().as_secs_f64());
    }
    for m in &report.methods {
        info!("{:<13} {} = {:.3}  auc = {:.3}  ({} trials)", m.method.as_str(), m.metric, m.probability, m.auc, m.n_replicates);
    }

    let path = out.join("eval_report.json");
    io::write_json(&path, &ctx.prov, &report)?;
    wrote(&path);
    let path = out.join("roc.tsv");
    io::write_tsv(&path, &ctx.prov, &roc_table(&report))?;
    wrote(&path);
    let manifest = Manifest {
        preset,
        methods: &methods,
        config: &cfg,
        networks: (0..cfg.n_networks).map(|net| network_seeds(&cfg, net)).collect(),
        outputs: ["eval_report.json", "roc.tsv"],
    };
    let path = out.join("manifest.json");
    io::write_json(&path, &ctx.prov, &manifest)?;
    wrote(&path);
    Ok(())
}
