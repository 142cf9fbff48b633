//! Sequential detection of multiple perturbation sites.
//!
//! After a set `S` of sites has been found, candidate `i` is scored by the
//! nested statistic `T_i^[s+1] = T_(i,S) − T_S`, which is `χ²_K` when `i` is
//! unperturbed. The procedure is greedy: each step adds the best remaining node.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtertest::{by_adjust, group_statistic, FilteredSummary};
use crate::linalg::{cholesky, NodeLayout, SymMatrix};
use crate::netmodel::{GaussianSampler, PerturbationSpec};
use crate::rng::Rng;
use crate::special::chisq_sf;

/// Flags a first selection whose statistic is less than this multiple of the runner-up.
pub const WEAK_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSteps,
    NoSignificant,
    /// Every node was selected.
    Exhausted,
}

/// How BY adjustment is applied across steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjustment {
    /// Adjust among the candidates of each step separately.
    #[default]
    WithinStep,
    /// Adjust all p-values computed so far together.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialStep {
    /// 1-based step index.
    pub step: usize,
    /// Nodes found before this step.
    pub found: Vec<usize>,
    pub candidates: Vec<usize>,
    /// Unclipped nested statistics, aligned with `candidates`.
    pub statistics: Vec<f64>,
    pub p_raw: Vec<f64>,
    pub p_adjusted: Vec<f64>,
    /// `None` when no candidate passed the significance level.
    pub selected: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialTrace {
    pub steps: Vec<SequentialStep>,
    pub stop_reason: StopReason,
    pub adjustment: Adjustment,
    /// The first selection beat the runner-up by less than [`WEAK_MARGIN`]; later
    /// steps condition on it and may be misleading if it is a false positive.
    pub weak_first_selection: bool,
}

impl SequentialTrace {
    pub fn selected(&self) -> Vec<usize> {
        self.steps.iter().filter_map(|s| s.selected).collect()
    }
}

fn node_group(layout: &NodeLayout, nodes: &[usize]) -> Result<Vec<usize>> {
    layout.group_indices(nodes)
}

/// `T_(i,S) − T_S`; equals the plain node statistic when `S` is empty.
/// The value is not clipped.
pub fn sequential_statistic(fs: &FilteredSummary, s_set: &[usize], i: usize) -> Result<f64> {
    let layout = &fs.layout;
    if i >= layout.p() {
        return Err(Error::NodeOutOfRange { node: i, p: layout.p() });
    }
    if s_set.contains(&i) {
        return Err(Error::InvalidConfig("candidate node is already in the found set"));
    }
    let own = node_group(layout, &[i])?;
    if s_set.is_empty() {
        return group_statistic(fs, &own);
    }
    let base = group_statistic(fs, &node_group(layout, s_set)?)?;
    nested(fs, s_set, i, base)
}

fn nested(fs: &FilteredSummary, s_set: &[usize], i: usize, base: f64) -> Result<f64> {
    let mut nodes = Vec::with_capacity(s_set.len() + 1);
    nodes.push(i);
    nodes.extend_from_slice(s_set);
    Ok(group_statistic(fs, &node_group(&fs.layout, &nodes)?)? - base)
}

fn argmax(stats: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in stats.iter().enumerate() {
        if *v > stats[best] {
            best = j;
        }
    }
    best
}

/// Greedy sequential ranking. Step 1 is the plain node ranking; each later
/// step conditions on the nodes already selected. When `alpha` is given the
/// procedure stops at the first step where no adjusted p-value is below it.
pub fn sequential_rank(
    fs: &FilteredSummary,
    max_steps: usize,
    alpha: Option<f64>,
    adjustment: Adjustment,
) -> Result<SequentialTrace> {
    if max_steps == 0 {
        return Err(Error::InvalidConfig("max_steps must be at least 1"));
    }
    if let Some(a) = alpha {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::InvalidConfig("alpha must lie in (0, 1]"));
        }
    }
    let layout = &fs.layout;
    let k = layout.k();
    let mut found: Vec<usize> = Vec::new();
    let mut steps: Vec<SequentialStep> = Vec::new();
    let mut pooled: Vec<f64> = Vec::new();
    let mut weak_first_selection = false;

    let stop_reason = loop {
        if steps.len() == max_steps {
            break StopReason::MaxSteps;
        }
        let candidates: Vec<usize> = (0..layout.p()).filter(|j| !found.contains(j)).collect();
        if candidates.is_empty() {
            break StopReason::Exhausted;
        }
        let statistics = if found.is_empty() {
            candidates
                .iter()
                .map(|&j| group_statistic(fs, &node_group(layout, &[j])?))
                .collect::<Result<Vec<_>>>()?
        } else {
            let base = group_statistic(fs, &node_group(layout, &found)?)?;
            candidates.iter().map(|&j| nested(fs, &found, j, base)).collect::<Result<Vec<_>>>()?
        };
        let clipped: Vec<f64> = statistics.iter().map(|t| t.max(0.0)).collect();
        let p_raw = clipped.iter().map(|&t| chisq_sf(t, k)).collect::<Result<Vec<_>>>()?;
        let p_adjusted = match adjustment {
            Adjustment::WithinStep => by_adjust(&p_raw)?,
            Adjustment::Pooled => {
                pooled.extend_from_slice(&p_raw);
                let all = by_adjust(&pooled)?;
                all[all.len() - p_raw.len()..].to_vec()
            }
        };
        let best = argmax(&clipped);
        if steps.is_empty() && clipped.len() > 1 {
            let runner_up = clipped.iter().enumerate().filter(|&(j, _)| j != best).fold(0.0f64, |m, (_, &v)| m.max(v));
            weak_first_selection = clipped[best] < WEAK_MARGIN * runner_up;
        }
        let significant = alpha.map_or(true, |a| p_adjusted.iter().any(|&p| p < a));
        let selected = significant.then_some(candidates[best]);
        steps.push(SequentialStep {
            step: steps.len() + 1,
            found: found.clone(),
            candidates,
            statistics,
            p_raw,
            p_adjusted,
            selected,
        });
        match selected {
            Some(node) => found.push(node),
            None => break StopReason::NoSignificant,
        }
    };
    Ok(SequentialTrace { steps, stop_reason, adjustment, weak_first_selection })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub node: usize,
    pub found: Vec<usize>,
    pub n_reps: usize,
    pub n: usize,
    /// Monte Carlo mean of `T_i − T_i^[s+1]`.
    pub empirical_mean: f64,
    pub standard_error: f64,
    /// `n(μ_iᵀΣ_iSΣ_Siμ_i + 2μ_iᵀΣ_iSμ_S + μ_SᵀΣ_SiΣ_iSμ_S)`.
    pub closed_form: f64,
    /// `n(m_iᵀΣ_ii⁻¹m_i + m_SᵀΣ_SS⁻¹m_S − m_GᵀΣ_GG⁻¹m_G)` with `m = Σμ`, `G = {i} ∪ S`.
    pub exact_expectation: f64,
    /// `(empirical − closed_form) / standard_error`.
    pub z_closed_form: f64,
    pub z_exact: f64,
}

fn block_bilinear(sigma: &SymMatrix, u: &[f64], rows: &[usize], cols: &[usize], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, &r) in rows.iter().enumerate() {
        for (b, &c) in cols.iter().enumerate() {
            acc += u[a] * sigma.get(r, c) * v[b];
        }
    }
    acc
}

/// `Σ_{rows,mid} Σ_{mid,cols}` applied as a bilinear form.
fn through(sigma: &SymMatrix, u: &[f64], rows: &[usize], mid: &[usize], cols: &[usize], v: &[f64]) -> f64 {
    let left: Vec<f64> = mid
        .iter()
        .map(|&m| rows.iter().zip(u).map(|(&r, x)| x * sigma.get(r, m)).sum())
        .collect();
    block_bilinear(sigma, &left, mid, cols, v)
}

/// Checks the expected loss of statistic from conditioning on `S` against
/// Monte Carlo draws of the case mean under the exact network.
#[allow(clippy::too_many_arguments)]
pub fn theorem1_check(
    layout: &NodeLayout,
    omega: &SymMatrix,
    mu: &PerturbationSpec,
    s_set: &[usize],
    i: usize,
    n_reps: usize,
    n: usize,
    seed: u64,
) -> Result<Theorem1Report> {
    if s_set.is_empty() || s_set.contains(&i) {
        return Err(Error::InvalidConfig("the found set must be nonempty and exclude the candidate"));
    }
    if n_reps < 2 {
        return Err(Error::InvalidConfig("at least two replicates are required"));
    }
    let sampler = GaussianSampler::new(layout.clone(), omega)?;
    let sigma = sampler.sigma().clone();
    let gi = layout.group_indices(&[i])?;
    let gs = layout.group_indices(s_set)?;
    let mu_i: Vec<f64> = gi.iter().map(|&j| mu.mu[j]).collect();
    let mu_s: Vec<f64> = gs.iter().map(|&j| mu.mu[j]).collect();
    let nf = n as f64;
    let closed_form = nf
        * (through(&sigma, &mu_i, &gi, &gs, &gi, &mu_i)
            + 2.0 * block_bilinear(&sigma, &mu_i, &gi, &gs, &mu_s)
            + through(&sigma, &mu_s, &gs, &gi, &gs, &mu_s));

    let mean = sampler.mean(Some(mu))?;
    let quad = |idx: &[usize]| -> Result<f64> {
        let m: Vec<f64> = idx.iter().map(|&j| mean[j]).collect();
        cholesky(&sigma.principal(idx)?)?.inv_quadform(&m)
    };
    let mut gg = gi.clone();
    gg.extend_from_slice(&gs);
    let exact_expectation = nf * (quad(&gi)? + quad(&gs)? - quad(&gg)?);

    let mut rng = Rng::new(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_reps {
        let ybar = sampler.sample_mean(&mean, n, &mut rng);
        let fs = FilteredSummary::from_mean(layout.clone(), ybar, n, omega.clone(), sigma.clone())?;
        let plain = sequential_statistic(&fs, &[], i)?;
        let cond = sequential_statistic(&fs, s_set, i)?;
        let d = plain - cond;
        sum += d;
        sum_sq += d * d;
    }
    let reps = n_reps as f64;
    let empirical_mean = sum / reps;
    let var = ((sum_sq - reps * empirical_mean * empirical_mean) / (reps - 1.0)).max(0.0);
    let standard_error = libm::sqrt(var / reps);
    let z = |target: f64| {
        let diff = empirical_mean - target;
        if standard_error > 0.0 {
            diff / standard_error
        } else if diff.abs() < 1e-9 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    Ok(Theorem1Report {
        node: i,
        found: s_set.to_vec(),
        n_reps,
        n,
        empirical_mean,
        standard_error,
        closed_form,
        exact_expectation,
        z_closed_form: z(closed_form),
        z_exact: z(exact_expectation),
    })
}

/// Selected nodes in step order, padded with the remaining nodes by plain
/// statistic. Gives a full ranking from a trace.
pub fn full_order(trace: &SequentialTrace, p: usize, plain: &[f64]) -> Vec<usize> {
    let mut order = trace.selected();
    let mut rest: Vec<usize> = (0..p).filter(|j| !order.contains(j)).collect();
    rest.sort_by(|&a, &b| plain[b].total_cmp(&plain[a]).then(a.cmp(&b)));
    order.extend(rest);
    order
}

/// `rank[node]`, 1-based, from an ordering.
pub fn ranks_from_order(order: &[usize]) -> Vec<usize> {
    let mut ranks = vec![0; order.len()];
    for (pos, &node) in order.iter().enumerate() {
        ranks[node] = pos + 1;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtertest::{node_statistics, rank_nodes};
    use crate::linalg::{spd_inverse, Matrix};
    use crate::netmodel::{build_precision, perturbation_from_snr, Graph};

    fn toy_summary(snr: &[f64], nodes: &[usize], n: usize, seed: u64) -> FilteredSummary {
        let tp = build_precision(&Graph::new(3, &[(0, 1)]).unwrap(), 2, 0.8, 0.2).unwrap();
        let mu = perturbation_from_snr(&tp, nodes, snr).unwrap();
        let sampler = GaussianSampler::from_precision(&tp).unwrap();
        let mean = sampler.mean(Some(&mu)).unwrap();
        let ybar = sampler.sample_mean(&mean, n, &mut Rng::new(seed));
        FilteredSummary::from_mean(tp.layout.clone(), ybar, n, tp.omega.clone(), sampler.sigma().clone()).unwrap()
    }

    #[test]
    fn empty_set_is_plain_statistic() {
        let fs = toy_summary(&[0.5], &[0], 50, 1);
        let plain = node_statistics(&fs).unwrap();
        for i in 0..3 {
            assert_eq!(sequential_statistic(&fs, &[], i).unwrap(), plain[i]);
        }
        assert!(sequential_statistic(&fs, &[1], 1).is_err());
    }

    #[test]
    fn nesting_is_consistent() {
        for seed in 0..50 {
            let fs = toy_summary(&[0.3], &[1], 20, seed);
            for i in 0..3 {
                for s in 0..3 {
                    if s != i {
                        assert!(sequential_statistic(&fs, &[s], i).unwrap() >= -1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn single_step_matches_ranking() {
        let fs = toy_summary(&[0.5], &[0], 50, 2);
        let trace = sequential_rank(&fs, 1, None, Adjustment::WithinStep).unwrap();
        assert_eq!(trace.stop_reason, StopReason::MaxSteps);
        assert_eq!(trace.selected(), vec![rank_nodes(&fs).unwrap()[0].node.unwrap()]);
    }

    #[test]
    fn trace_invariants_and_exhaustion() {
        let fs = toy_summary(&[1.0, 0.25], &[0, 2], 50, 3);
        let trace = sequential_rank(&fs, 10, None, Adjustment::Pooled).unwrap();
        assert_eq!(trace.stop_reason, StopReason::Exhausted);
        let sel = trace.selected();
        assert_eq!(sel.len(), 3);
        for (j, step) in trace.steps.iter().enumerate() {
            assert_eq!(step.found, sel[..j].to_vec());
            assert_eq!(step.candidates.len(), 3 - j);
        }
    }

    #[test]
    fn alpha_stops_after_nonsignificant_scan() {
        let fs = toy_summary(&[1.5], &[2], 50, 4);
        let trace = sequential_rank(&fs, 5, Some(0.05), Adjustment::WithinStep).unwrap();
        assert_eq!(trace.stop_reason, StopReason::NoSignificant);
        assert_eq!(trace.selected(), vec![2]);
        assert_eq!(trace.steps.len(), 2);
        assert!(trace.steps[1].selected.is_none());
    }

    #[test]
    fn conditioning_finds_second_site() {
        // Node 0 strong, node 2 weak; node 1 inherits signal from node 0.
        let mut hits = 0;
        for seed in 0..200 {
            let fs = toy_summary(&[1.0, 0.25], &[0, 2], 50, 100 + seed);
            let second = sequential_rank(&fs, 2, None, Adjustment::WithinStep).unwrap();
            if second.selected() == vec![0, 2] {
                hits += 1;
            }
        }
        assert!(hits > 100, "{hits}");
    }

    #[test]
    fn nesting_gap_zero_without_cross_covariance() {
        let layout = NodeLayout::new(3, 2).unwrap();
        let sigma = SymMatrix::new(
            6,
            vec![
                1.0, 0.3, 0.0, 0.0, 0.2, 0.1, //
                0.3, 1.0, 0.0, 0.0, 0.0, 0.2, //
                0.0, 0.0, 1.0, 0.4, 0.0, 0.0, //
                0.0, 0.0, 0.4, 1.0, 0.0, 0.0, //
                0.2, 0.0, 0.0, 0.0, 1.0, 0.1, //
                0.1, 0.2, 0.0, 0.0, 0.1, 1.0,
            ],
        )
        .unwrap();
        let omega = spd_inverse(&sigma).unwrap();
        let mu = PerturbationSpec::from_mu(&layout, vec![0.3, 0.1, 0.2, 0.2, 0.0, 0.0]).unwrap();
        let r = theorem1_check(&layout, &omega, &mu, &[1], 0, 200, 30, 5).unwrap();
        assert!(r.closed_form.abs() < 1e-12);
        assert!(r.empirical_mean.abs() < 1e-8);
    }

    #[test]
    fn nesting_gap_matches_exact_form() {
        let layout = NodeLayout::new(3, 2).unwrap();
        let mut rng = Rng::new(12);
        let a = Matrix::from_fn(6, 6, |_, _| 0.3 * rng.normal());
        let omega = SymMatrix::from_matrix(a.matmul(&a.transpose()).unwrap()).unwrap().add_diagonal(1.0);
        let mu = PerturbationSpec::from_mu(&layout, vec![0.2, 0.1, 0.0, 0.0, 0.1, 0.3]).unwrap();
        let r = theorem1_check(&layout, &omega, &mu, &[2], 0, 3000, 40, 6).unwrap();
        assert!(r.z_exact.abs() < 4.0, "{r:?}");
    }
}
