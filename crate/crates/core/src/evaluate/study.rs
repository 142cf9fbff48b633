use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::baselines::{hotelling_t2, separated_precision, ttest_rank, SeparatedRanking};
use super::roc::roc_and_auc;
use super::{EvalReport, MethodId, MethodReport, SimConfig};
use crate::error::Result;
use crate::estimate::{estimate_precision, PenaltyWeights};
use crate::filtertest::{node_statistics, ranks_descending, FilteredSummary};
use crate::linalg::{spd_inverse, Matrix, NodeLayout, SymMatrix};
use crate::netmodel::{
    build_precision, perturbation_from_snr, sbm_graph, Condition, Dataset, GaussianSampler, Graph, TruePrecision,
};
use crate::rng::{derive_seed, Rng};
use crate::seqtest::{full_order, ranks_from_order, sequential_rank, Adjustment};

/// Per-network result: for each method, the rank of the true site(s) in every trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkOutcome {
    pub network: usize,
    /// Trial ranks by method. For two targets the rank is the larger of the two,
    /// i.e. the shortest list containing both.
    pub ranks: Vec<(MethodId, Vec<usize>)>,
    /// Methods skipped on this network because estimation did not converge.
    pub excluded: Vec<MethodId>,
    pub edge_f1: Option<f64>,
}

/// Every seed used by one network of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSeeds {
    pub network: usize,
    pub network_seed: u64,
    pub graph: u64,
    pub control: u64,
    /// Seed of the draws pairing first-block nodes with second-block partners.
    pub partner: Option<u64>,
    /// `(perturbed node, case sample seed)` per trial.
    pub cases: Vec<(usize, u64)>,
}

pub fn network_seeds(cfg: &SimConfig, network: usize) -> NetworkSeeds {
    let seed = derive_seed(cfg.seed, &[network as u64]);
    let (partner, cases) = if cfg.is_multi_target() {
        let first = cfg.block_sizes.first().copied().unwrap_or(0);
        (Some(derive_seed(seed, &[3])), (0..first).map(|node| (node, derive_seed(seed, &[4, node as u64]))).collect())
    } else {
        (None, (0..cfg.p).map(|node| (node, derive_seed(seed, &[2, node as u64]))).collect())
    };
    NetworkSeeds {
        network,
        network_seed: seed,
        graph: derive_seed(seed, &[0]),
        control: derive_seed(seed, &[1]),
        partner,
        cases,
    }
}

/// F1 score of an estimated edge set against the true graph (1 when both are empty).
pub fn edge_f1(estimated: &[(usize, usize)], truth: &Graph) -> f64 {
    let tp = estimated.iter().filter(|&&(a, b)| truth.has_edge(a, b)).count() as f64;
    let (ne, nt) = (estimated.len() as f64, truth.edges().len() as f64);
    if ne == 0.0 && nt == 0.0 {
        return 1.0;
    }
    if tp == 0.0 {
        return 0.0;
    }
    let precision = tp / ne;
    let recall = tp / nt;
    2.0 * precision * recall / (precision + recall)
}

struct Working {
    omega: SymMatrix,
    sigma: SymMatrix,
}

impl Working {
    fn new(omega: SymMatrix) -> Result<Self> {
        let sigma = spd_inverse(&omega)?;
        Ok(Working { omega, sigma })
    }

    fn summary(&self, layout: &NodeLayout, d: &Dataset) -> Result<FilteredSummary> {
        FilteredSummary::from_mean(layout.clone(), d.mean(), d.n(), self.omega.clone(), self.sigma.clone())
    }
}

struct Network {
    seeds: NetworkSeeds,
    graph: Graph,
    tp: TruePrecision,
    sampler: GaussianSampler,
    control: Dataset,
    multi: Option<Working>,
    single: Option<(NodeLayout, Working)>,
    separated: Option<Working>,
    excluded: Vec<MethodId>,
    edge_f1: Option<f64>,
}

/// Precision of the marginal of the given flat indices under the true model.
fn marginal_precision(sigma: &SymMatrix, idx: &[usize]) -> Result<SymMatrix> {
    spd_inverse(&sigma.principal(idx)?)
}

fn prepare(cfg: &SimConfig, methods: &[MethodId], network: usize) -> Result<Network> {
    let seeds = network_seeds(cfg, network);
    let graph = sbm_graph(cfg.p, &cfg.block_sizes, cfg.theta_within, cfg.theta_across, seeds.graph)?;
    let tp = build_precision(&graph, cfg.k, cfg.rho_in, cfg.rho_out)?;
    let sampler = GaussianSampler::from_precision(&tp)?;
    let control = sampler.sample(None, cfg.n, seeds.control, Condition::Control)?;
    let layout = tp.layout.clone();
    let weights = PenaltyWeights::uniform(cfg.p);
    let mut excluded = Vec::new();
    let mut edge_f1_value = None;

    let wants = |m: MethodId| methods.contains(&m);
    let multi = if wants(MethodId::MultiNf) || wants(MethodId::SeqMultiNf) {
        if cfg.use_true_precision {
            Some(Working { omega: tp.omega.clone(), sigma: sampler.sigma().clone() })
        } else {
            let path = estimate_precision(&control, &weights, &cfg.estimator)?;
            let best = path.into_best();
            edge_f1_value = Some(edge_f1(&best.edge_set, &graph));
            if best.converged {
                Some(Working::new(best.omega_hat)?)
            } else {
                excluded.extend(methods.iter().copied().filter(|m| matches!(m, MethodId::MultiNf | MethodId::SeqMultiNf)));
                None
            }
        }
    } else {
        None
    };

    let single = if wants(MethodId::SingleNf) {
        let a = cfg.single_attribute;
        let d = control.attribute(a)?;
        if cfg.use_true_precision {
            let omega = marginal_precision(sampler.sigma(), &layout.attribute_indices(a))?;
            Some((d.layout.clone(), Working::new(omega)?))
        } else {
            let best = estimate_precision(&d, &weights, &cfg.estimator)?.into_best();
            if best.converged {
                Some((d.layout.clone(), Working::new(best.omega_hat)?))
            } else {
                excluded.push(MethodId::SingleNf);
                None
            }
        }
    } else {
        None
    };

    let separated = if wants(MethodId::SeparatedNf) {
        if cfg.use_true_precision {
            let dim = layout.dim();
            let mut omega = Matrix::zeros(dim, dim);
            for a in 0..cfg.k {
                let idx = layout.attribute_indices(a);
                let block = marginal_precision(sampler.sigma(), &idx)?;
                for (i, &fi) in idx.iter().enumerate() {
                    for (j, &fj) in idx.iter().enumerate() {
                        omega[(fi, fj)] = block.get(i, j);
                    }
                }
            }
            Some(Working::new(SymMatrix::from_matrix(omega)?)?)
        } else {
            let (omega, converged) = separated_precision(&control, &cfg.estimator)?;
            if converged {
                Some(Working::new(omega)?)
            } else {
                excluded.push(MethodId::SeparatedNf);
                None
            }
        }
    } else {
        None
    };

    Ok(Network { seeds, graph, tp, sampler, control, multi, single, separated, excluded, edge_f1: edge_f1_value })
}

/// 1-based rank of every node under one method.
fn node_ranks(method: MethodId, net: &Network, cfg: &SimConfig, case: &Dataset) -> Result<Option<Vec<usize>>> {
    let layout = &net.tp.layout;
    let ranks = match method {
        MethodId::MultiNf => {
            let Some(w) = &net.multi else { return Ok(None) };
            ranks_descending(&node_statistics(&w.summary(layout, case)?)?)
        }
        MethodId::SeqMultiNf => {
            let Some(w) = &net.multi else { return Ok(None) };
            let fs = w.summary(layout, case)?;
            let trace = sequential_rank(&fs, layout.p(), None, Adjustment::WithinStep)?;
            ranks_from_order(&full_order(&trace, layout.p(), &node_statistics(&fs)?))
        }
        MethodId::SingleNf => {
            let Some((single_layout, w)) = &net.single else { return Ok(None) };
            let d = case.attribute(cfg.single_attribute)?;
            ranks_descending(&node_statistics(&w.summary(single_layout, &d)?)?)
        }
        MethodId::SeparatedNf => {
            let Some(w) = &net.separated else { return Ok(None) };
            SeparatedRanking::from_summary(&w.summary(layout, case)?)?.node_ranks
        }
        MethodId::Hotelling => {
            let stats = (0..layout.p()).map(|j| hotelling_t2(case, &net.control, j)).collect::<Result<Vec<_>>>()?;
            ranks_descending(&stats)
        }
        MethodId::Ttest => {
            let stats = (0..layout.p())
                .map(|j| ttest_rank(case, &net.control, layout.index(j, cfg.single_attribute)).map(libm::fabs))
                .collect::<Result<Vec<_>>>()?;
            ranks_descending(&stats)
        }
    };
    Ok(Some(ranks))
}

fn run_trials(cfg: &SimConfig, methods: &[MethodId], net: &Network, network: usize, trials: &[(Vec<usize>, Vec<f64>, u64)]) -> Result<NetworkOutcome> {
    let mut ranks: Vec<(MethodId, Vec<usize>)> = methods
        .iter()
        .filter(|m| !net.excluded.contains(m))
        .map(|&m| (m, Vec::with_capacity(trials.len())))
        .collect();
    for (targets, snr, seed) in trials {
        let mu = perturbation_from_snr(&net.tp, targets, snr)?;
        let case = net.sampler.sample(Some(&mu), cfg.n, *seed, Condition::Case)?;
        for (method, out) in ranks.iter_mut() {
            if let Some(r) = node_ranks(*method, net, cfg, &case)? {
                out.push(targets.iter().map(|&t| r[t]).max().unwrap_or(1));
            }
        }
    }
    Ok(NetworkOutcome { network, ranks, excluded: net.excluded.clone(), edge_f1: net.edge_f1 })
}

/// One network of the single-target protocol: every node is perturbed in turn.
pub fn run_single_target_network(cfg: &SimConfig, methods: &[MethodId], network: usize) -> Result<NetworkOutcome> {
    cfg.validate()?;
    let net = prepare(cfg, methods, network)?;
    let trials: Vec<(Vec<usize>, Vec<f64>, u64)> =
        net.seeds.cases.iter().map(|&(node, seed)| (vec![node], vec![cfg.snr], seed)).collect();
    run_trials(cfg, methods, &net, network, &trials)
}

/// One network of the two-target protocol: each first-block node is paired
/// with a random second-block node carrying the weaker perturbation.
pub fn run_multi_target_network(cfg: &SimConfig, methods: &[MethodId], network: usize) -> Result<NetworkOutcome> {
    cfg.validate()?;
    let second = cfg.second_snr.ok_or(crate::error::Error::InvalidConfig("multi-target studies need a second SNR"))?;
    let net = prepare(cfg, methods, network)?;
    let second_block = net.graph.block_members(1);
    let mut rng = Rng::new(net.seeds.partner.unwrap_or_default());
    let trials: Vec<(Vec<usize>, Vec<f64>, u64)> = net
        .seeds
        .cases
        .iter()
        .map(|&(node, seed)| {
            let partner = second_block[rng.below(second_block.len())];
            (vec![node, partner], vec![cfg.snr, second], seed)
        })
        .collect();
    run_trials(cfg, methods, &net, network, &trials)
}

/// Combines per-network outcomes (in any order) into a report.
pub fn aggregate(cfg: &SimConfig, methods: &[MethodId], outcomes: &[NetworkOutcome]) -> Result<EvalReport> {
    let mut sorted: Vec<&NetworkOutcome> = outcomes.iter().collect();
    sorted.sort_by_key(|o| o.network);
    let threshold = if cfg.is_multi_target() { 2 } else { 1 };
    let mut reports = Vec::with_capacity(methods.len());
    for &m in methods {
        let ranks: Vec<usize> = sorted
            .iter()
            .flat_map(|o| o.ranks.iter().filter(|(id, _)| *id == m).flat_map(|(_, r)| r.iter().copied()))
            .collect();
        let excluded_networks = sorted.iter().filter(|o| o.excluded.contains(&m)).count();
        let curve = roc_and_auc(&ranks, cfg.p)?;
        let total = ranks.len();
        let hits = ranks.iter().filter(|&&r| r <= threshold).count();
        let denom = total.max(1) as f64;
        reports.push(MethodReport {
            method: m,
            metric: if threshold == 1 { "top1" } else { "top2" }.to_string(),
            probability: hits as f64 / denom,
            auc: if total == 0 { 0.0 } else { curve.auc },
            roc: curve.points,
            mean_rank: ranks.iter().sum::<usize>() as f64 / denom,
            n_replicates: total,
            excluded_networks,
            seed: cfg.seed,
        });
    }
    let f1: Vec<f64> = sorted.iter().filter_map(|o| o.edge_f1).collect();
    let mean_edge_f1 = (!f1.is_empty()).then(|| f1.iter().sum::<f64>() / f1.len() as f64);
    Ok(EvalReport { config: cfg.clone(), methods: reports, mean_edge_f1, failed_networks: 0, runtime_seconds: None })
}

fn run_study(
    cfg: &SimConfig,
    methods: &[MethodId],
    per_network: fn(&SimConfig, &[MethodId], usize) -> Result<NetworkOutcome>,
) -> Result<EvalReport> {
    cfg.validate()?;
    let mut outcomes = Vec::with_capacity(cfg.n_networks);
    let mut failed = 0;
    for network in 0..cfg.n_networks {
        match per_network(cfg, methods, network) {
            Ok(o) => outcomes.push(o),
            Err(_) => failed += 1,
        }
    }
    let mut report = aggregate(cfg, methods, &outcomes)?;
    report.failed_networks = failed;
    Ok(report)
}

/// Single-perturbation study over `cfg.n_networks` networks, run serially.
pub fn run_single_target_study(cfg: &SimConfig, methods: &[MethodId]) -> Result<EvalReport> {
    run_study(cfg, methods, run_single_target_network)
}

/// Two-perturbation study; the metric is the probability that both sites take
/// the first two positions.
pub fn run_multi_target_study(cfg: &SimConfig, methods: &[MethodId]) -> Result<EvalReport> {
    if !cfg.is_multi_target() {
        return Err(crate::error::Error::InvalidConfig("multi-target studies need a second SNR"));
    }
    run_study(cfg, methods, run_multi_target_network)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            p: 6,
            block_sizes: vec![3, 3],
            n: 30,
            snr: 0.4,
            n_networks: 2,
            estimator: crate::estimate::EstimatorSettings { n_lambda: 6, ..Default::default() },
            ..SimConfig::default()
        }
    }

    #[test]
    fn f1_examples() {
        let g = Graph::new(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(edge_f1(&[(0, 1), (2, 3)], &g), 1.0);
        assert_eq!(edge_f1(&[], &g), 0.0);
        assert!((edge_f1(&[(0, 1)], &g) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(edge_f1(&[], &Graph::new(3, &[]).unwrap()), 1.0);
    }

    #[test]
    fn study_is_deterministic_and_order_invariant() {
        let cfg = small();
        let methods = MethodId::ALL;
        let a = run_single_target_study(&cfg, &methods).unwrap();
        let b = run_single_target_study(&cfg, &methods).unwrap();
        assert_eq!(a, b);
        let mut outcomes: Vec<NetworkOutcome> =
            (0..2).map(|i| run_single_target_network(&cfg, &methods, i).unwrap()).collect();
        outcomes.reverse();
        assert_eq!(aggregate(&cfg, &methods, &outcomes).unwrap(), a);
        for m in &a.methods {
            assert_eq!(m.n_replicates + 6 * m.excluded_networks, 12);
            assert!((0.0..=1.0).contains(&m.probability) && (0.0..=1.0).contains(&m.auc));
        }
    }

    #[test]
    fn multi_target_runs() {
        let cfg = SimConfig { second_snr: Some(0.2), theta_across: 0.0, ..small() };
        let methods = [MethodId::SeqMultiNf, MethodId::MultiNf, MethodId::Hotelling];
        let r = run_multi_target_study(&cfg, &methods).unwrap();
        assert_eq!(r.methods.len(), 3);
        assert_eq!(r.methods[0].metric, "top2");
        assert_eq!(r.methods[0].n_replicates, 6);
        assert!(run_multi_target_study(&small(), &methods).is_err());
    }
}
