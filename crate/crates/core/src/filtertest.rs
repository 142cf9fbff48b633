//! Network filtering and likelihood-ratio tests for perturbation sites.
//!
//! Case data `Y ~ N(Σμ, Σ)` are filtered to `Z = ΩY ~ N(μ, Ω)`. For a group of
//! attribute indices `G` the likelihood-ratio statistic against `μ = 0` is
//!
//! ```text
//! T_G = n · ȳ_Gᵀ Σ_GG⁻¹ ȳ_G  ~  χ²_|G|  under the null,
//! ```
//!
//! which equals the filtered form
//! `n (z̄ᵀΣz̄ − z̄_cᵀ(Σ_cc − Σ_cG Σ_GG⁻¹ Σ_Gc) z̄_c)` with `c` the complement of `G`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, complement, condition_number, dot, quadform, spd_inverse, Cholesky, NodeLayout, SymMatrix};
use crate::netmodel::{Dataset, GaussianSampler, PerturbationSpec, TruePrecision};
use crate::rng::Rng;
use crate::special::chisq_sf;

/// Groups whose covariance block is worse conditioned than this are rejected.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Case-data means before and after filtering, with the working network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredSummary {
    pub zbar: Vec<f64>,
    pub ybar: Vec<f64>,
    pub n_case: usize,
    pub omega: SymMatrix,
    pub sigma: SymMatrix,
    pub layout: NodeLayout,
}

impl FilteredSummary {
    /// Builds a summary from a precomputed mean and covariance `Σ = Ω⁻¹`.
    pub fn from_mean(layout: NodeLayout, ybar: Vec<f64>, n_case: usize, omega: SymMatrix, sigma: SymMatrix) -> Result<Self> {
        let dim = layout.dim();
        for found in [ybar.len(), omega.dim(), sigma.dim()] {
            if found != dim {
                return Err(Error::DimensionMismatch { expected: dim, found });
            }
        }
        if ybar.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let zbar = omega.matvec(&ybar)?;
        Ok(FilteredSummary { zbar, ybar, n_case, omega, sigma, layout })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }
}

/// `z̄ = Ω ȳ` over the case samples; caches `Σ = Ω⁻¹`.
pub fn filter(d: &Dataset, omega: &SymMatrix) -> Result<FilteredSummary> {
    if omega.dim() != d.dim() {
        return Err(Error::DimensionMismatch { expected: d.dim(), found: omega.dim() });
    }
    let sigma = spd_inverse(omega)?;
    FilteredSummary::from_mean(d.layout.clone(), d.mean(), d.n(), omega.clone(), sigma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    /// Tested attribute indices (0-based flat indices).
    pub group: Vec<usize>,
    /// Node under test when the group is a single node.
    pub node: Option<usize>,
    pub statistic: f64,
    pub df: usize,
    pub p_raw: f64,
    pub p_adjusted: f64,
    /// 1-based position in a ranking; 0 when the result has not been ranked.
    pub rank: usize,
    pub mu_hat: Vec<f64>,
}

fn check_group(fs: &FilteredSummary, group: &[usize]) -> Result<()> {
    if group.is_empty() {
        return Err(Error::InvalidConfig("test group must be nonempty"));
    }
    let dim = fs.dim();
    for (i, &g) in group.iter().enumerate() {
        if g >= dim {
            return Err(Error::IndexOutOfRange { index: g, dim });
        }
        if group[..i].contains(&g) {
            return Err(Error::InvalidConfig("test group has a repeated index"));
        }
    }
    Ok(())
}

/// Factorizes `Σ_GG`, rejecting numerically singular blocks.
fn group_factor(fs: &FilteredSummary, group: &[usize]) -> Result<Cholesky> {
    check_group(fs, group)?;
    let block = fs.sigma.principal(group)?;
    let condition = condition_number(&block);
    if !(condition <= SINGULAR_CONDITION) {
        return Err(Error::SingularBlock { condition });
    }
    cholesky(&block).map_err(|_| Error::SingularBlock { condition })
}

fn gather(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

/// `Σ_Gc z̄_c`.
fn cross_term(fs: &FilteredSummary, group: &[usize], rest: &[usize]) -> Vec<f64> {
    group
        .iter()
        .map(|&g| rest.iter().map(|&c| fs.sigma.get(g, c) * fs.zbar[c]).sum())
        .collect()
}

/// Maximum-likelihood estimate of `μ_G` with `μ` zero off `G`: `Σ_GG⁻¹ ȳ_G`.
pub fn mu_mle(fs: &FilteredSummary, group: &[usize]) -> Result<Vec<f64>> {
    let chol = group_factor(fs, group)?;
    let mu = chol.solve(&gather(&fs.ybar, group))?;
    debug_assert!({
        let alt = mu_mle_from_filtered(fs, group)?;
        let scale = mu.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        mu.iter().zip(&alt).all(|(a, b)| (a - b).abs() <= 1e-8 * scale)
    });
    Ok(mu)
}

/// The same estimate in filtered coordinates: `z̄_G + Σ_GG⁻¹ Σ_Gc z̄_c`.
pub fn mu_mle_from_filtered(fs: &FilteredSummary, group: &[usize]) -> Result<Vec<f64>> {
    let chol = group_factor(fs, group)?;
    let rest = complement(fs.dim(), group);
    let shift = chol.solve(&cross_term(fs, group, &rest))?;
    Ok(group.iter().zip(shift).map(|(&g, s)| fs.zbar[g] + s).collect())
}

/// `n · ȳ_Gᵀ Σ_GG⁻¹ ȳ_G` without building a full result.
pub fn group_statistic(fs: &FilteredSummary, group: &[usize]) -> Result<f64> {
    let chol = group_factor(fs, group)?;
    Ok(fs.n_case as f64 * chol.inv_quadform(&gather(&fs.ybar, group))?)
}

/// The statistic evaluated through the filtered means and the Schur complement.
pub fn lrt_statistic_full_form(fs: &FilteredSummary, group: &[usize]) -> Result<f64> {
    let chol = group_factor(fs, group)?;
    let rest = complement(fs.dim(), group);
    let total = quadform(&fs.zbar, &fs.sigma)?;
    let zc = gather(&fs.zbar, &rest);
    let sigma_cc = fs.sigma.principal(&rest)?;
    let v = cross_term(fs, group, &rest);
    let schur = quadform(&zc, &sigma_cc)? - chol.inv_quadform(&v)?;
    Ok(fs.n_case as f64 * (total - schur))
}

/// Likelihood-ratio test of `μ_G = 0`; `df = |G|`.
pub fn lrt_statistic(fs: &FilteredSummary, group: &[usize]) -> Result<LrtResult> {
    let chol = group_factor(fs, group)?;
    let yg = gather(&fs.ybar, group);
    let mu_hat = chol.solve(&yg)?;
    let statistic = fs.n_case as f64 * dot(&yg, &mu_hat);
    debug_assert!({
        let full = lrt_statistic_full_form(fs, group)?;
        let scale = statistic.abs().max(fs.n_case as f64 * quadform(&fs.zbar, &fs.sigma)?).max(1.0);
        (full - statistic).abs() <= 1e-8 * scale
    });
    let df = group.len();
    let p_raw = chisq_sf(statistic.max(0.0), df)?;
    let node = node_of_group(&fs.layout, group);
    Ok(LrtResult { group: group.to_vec(), node, statistic, df, p_raw, p_adjusted: p_raw, rank: 0, mu_hat })
}

fn node_of_group(layout: &NodeLayout, group: &[usize]) -> Option<usize> {
    let node = layout.node_of(group[0]);
    let range = layout.node_range(node);
    (group.len() == range.len() && group.iter().zip(range).all(|(&g, r)| g == r)).then_some(node)
}

/// Order of `stats` by decreasing value, ties by index.
pub fn descending_order(stats: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| stats[b].total_cmp(&stats[a]).then(a.cmp(&b)));
    order
}

/// 1-based rank of each entry under [`descending_order`].
pub fn ranks_descending(stats: &[f64]) -> Vec<usize> {
    let mut ranks = vec![0; stats.len()];
    for (pos, i) in descending_order(stats).into_iter().enumerate() {
        ranks[i] = pos + 1;
    }
    ranks
}

/// Tests every node, sorts by statistic (ties by node index) and attaches
/// BY-adjusted p-values.
pub fn rank_nodes(fs: &FilteredSummary) -> Result<Vec<LrtResult>> {
    let layout = &fs.layout;
    let mut results = (0..layout.p())
        .map(|node| {
            let group: Vec<usize> = layout.node_range(node).collect();
            lrt_statistic(fs, &group)
        })
        .collect::<Result<Vec<_>>>()?;
    let adjusted = by_adjust(&results.iter().map(|r| r.p_raw).collect::<Vec<_>>())?;
    for (r, adj) in results.iter_mut().zip(adjusted) {
        r.p_adjusted = adj;
    }
    let stats: Vec<f64> = results.iter().map(|r| r.statistic).collect();
    let order = descending_order(&stats);
    let mut sorted: Vec<LrtResult> = order.iter().map(|&i| results[i].clone()).collect();
    for (pos, r) in sorted.iter_mut().enumerate() {
        r.rank = pos + 1;
    }
    Ok(sorted)
}

/// Node statistics only, in node order. Used by the simulation harness.
pub fn node_statistics(fs: &FilteredSummary) -> Result<Vec<f64>> {
    (0..fs.layout.p())
        .map(|node| {
            let group: Vec<usize> = fs.layout.node_range(node).collect();
            group_statistic(fs, &group)
        })
        .collect()
}

/// Benjamini–Yekutieli step-up adjustment, returned in input order.
pub fn by_adjust(p_raw: &[f64]) -> Result<Vec<f64>> {
    if p_raw.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::DomainError("p-values must lie in [0, 1]"));
    }
    let m = p_raw.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let c_m: f64 = (1..=m).map(|i| 1.0 / i as f64).sum();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_raw[a].total_cmp(&p_raw[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; m];
    let mut running = 1.0f64;
    for (pos, &i) in order.iter().enumerate().rev() {
        let j = (pos + 1) as f64;
        running = running.min(p_raw[i] * m as f64 * c_m / j);
        out[i] = running.min(1.0);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub perturbed: usize,
    pub n_reps: usize,
    pub n: usize,
    /// Monte Carlo mean of each node's statistic.
    pub mean_statistic: Vec<f64>,
    /// Fraction of replicates where the perturbed node's statistic exceeds node `j`'s.
    pub prob_exceeds: Vec<f64>,
    /// `n · m_jᵀ Σ_jj⁻¹ m_j` with `m = Σμ`: the noncentrality of each node's statistic.
    pub noncentrality: Vec<f64>,
    /// Perturbed node has the largest mean statistic.
    pub dominates: bool,
}

/// Monte Carlo study of node statistics under a single perturbed node and the
/// exact precision matrix.
pub fn stochastic_dominance_check(
    tp: &TruePrecision,
    mu: &PerturbationSpec,
    perturbed: usize,
    n_reps: usize,
    n: usize,
    seed: u64,
) -> Result<DominanceReport> {
    let layout = &tp.layout;
    if perturbed >= layout.p() {
        return Err(Error::NodeOutOfRange { node: perturbed, p: layout.p() });
    }
    if n_reps == 0 {
        return Err(Error::InvalidConfig("at least one replicate is required"));
    }
    let sampler = GaussianSampler::from_precision(tp)?;
    let sigma = sampler.sigma().clone();
    let mean = sampler.mean(Some(mu))?;
    let exact = FilteredSummary::from_mean(layout.clone(), mean.clone(), n, tp.omega.clone(), sigma.clone())?;
    let noncentrality = node_statistics(&exact)?;

    let p = layout.p();
    let mut sums = vec![0.0; p];
    let mut wins = vec![0usize; p];
    let mut rng = Rng::new(seed);
    for _ in 0..n_reps {
        let ybar = sampler.sample_mean(&mean, n, &mut rng);
        let fs = FilteredSummary::from_mean(layout.clone(), ybar, n, tp.omega.clone(), sigma.clone())?;
        let stats = node_statistics(&fs)?;
        for j in 0..p {
            sums[j] += stats[j];
            if stats[perturbed] > stats[j] {
                wins[j] += 1;
            }
        }
    }
    let mean_statistic: Vec<f64> = sums.iter().map(|s| s / n_reps as f64).collect();
    let prob_exceeds = wins.iter().map(|&w| w as f64 / n_reps as f64).collect();
    let dominates = (0..p).all(|j| j == perturbed || mean_statistic[perturbed] > mean_statistic[j]);
    Ok(DominanceReport { perturbed, n_reps, n, mean_statistic, prob_exceeds, noncentrality, dominates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::netmodel::{build_precision, perturbation_from_snr, sample, Graph};

    fn summary(sigma: SymMatrix, ybar: Vec<f64>, n: usize, k: usize) -> FilteredSummary {
        let layout = NodeLayout::new(sigma.dim() / k, k).unwrap();
        let omega = spd_inverse(&sigma).unwrap();
        FilteredSummary::from_mean(layout, ybar, n, omega, sigma).unwrap()
    }

    fn random_spd(dim: usize, rng: &mut Rng) -> SymMatrix {
        let a = Matrix::from_fn(dim, dim, |_, _| rng.normal());
        let m = a.matmul(&a.transpose()).unwrap();
        SymMatrix::from_matrix(m).unwrap().add_diagonal(0.5)
    }

    #[test]
    fn identity_filter_is_noop() {
        let tp = build_precision(&Graph::new(3, &[(0, 1)]).unwrap(), 2, 0.8, 0.2).unwrap();
        let d = sample(&tp, None, 10, 1).unwrap();
        let fs = filter(&d, &SymMatrix::identity(6)).unwrap();
        assert_eq!(fs.zbar, fs.ybar);
        assert_eq!(filter(&d, &SymMatrix::identity(6)).unwrap(), fs);
        assert!(filter(&d, &SymMatrix::identity(4)).is_err());
    }

    #[test]
    fn mle_examples() {
        let fs = summary(SymMatrix::identity(4), vec![0.1, -0.2, 0.3, 0.4], 10, 2);
        assert_eq!(mu_mle(&fs, &[0, 1]).unwrap(), vec![0.1, -0.2]);

        let sigma = SymMatrix::new(2, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
        let omega = spd_inverse(&sigma).unwrap();
        let ybar = sigma.matvec(&[1.0, 0.0]).unwrap();
        let fs = FilteredSummary::from_mean(NodeLayout::new(2, 1).unwrap(), ybar, 5, omega, sigma).unwrap();
        assert!((fs.zbar[0] - 1.0).abs() < 1e-12 && fs.zbar[1].abs() < 1e-12);
        assert!((mu_mle(&fs, &[0]).unwrap()[0] - 1.0).abs() < 1e-12);
        assert!((mu_mle_from_filtered(&fs, &[0]).unwrap()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn statistic_examples() {
        let fs = summary(SymMatrix::identity(2), vec![0.0, 0.0], 10, 1);
        let r = lrt_statistic(&fs, &[0]).unwrap();
        assert_eq!((r.statistic, r.p_raw, r.df), (0.0, 1.0, 1));

        let fs = summary(SymMatrix::identity(2), vec![0.3, 0.0], 100, 1);
        let r = lrt_statistic(&fs, &[0]).unwrap();
        assert!((r.statistic - 9.0).abs() < 1e-12);
        assert!((r.p_raw - 0.0026997960632601866).abs() < 1e-12);
        assert_eq!(r.node, Some(0));
    }

    #[test]
    fn two_forms_agree() {
        let mut rng = Rng::new(3);
        for _ in 0..200 {
            let p = 1 + rng.below(6);
            let k = 1 + rng.below(3);
            let sigma = random_spd(p * k, &mut rng);
            let ybar = rng.normals(p * k);
            let fs = summary(sigma, ybar, 20, k);
            let size = 1 + rng.below(p * k);
            let mut idx: Vec<usize> = (0..p * k).collect();
            rng.shuffle(&mut idx);
            let group = &idx[..size];
            let simple = group_statistic(&fs, group).unwrap();
            let full = lrt_statistic_full_form(&fs, group).unwrap();
            assert!((simple - full).abs() <= 1e-8 * simple.abs().max(1.0), "{simple} vs {full}");
            let a = mu_mle(&fs, group).unwrap();
            let b = mu_mle_from_filtered(&fs, group).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-8 * x.abs().max(1.0)));
        }
    }

    #[test]
    fn singular_block_rejected() {
        let sigma = SymMatrix::new(2, vec![1.0, 1.0 - 1e-14, 1.0 - 1e-14, 1.0]).unwrap();
        let layout = NodeLayout::new(1, 2).unwrap();
        let fs = FilteredSummary::from_mean(layout, vec![1.0, 0.0], 5, SymMatrix::identity(2), sigma).unwrap();
        assert!(matches!(lrt_statistic(&fs, &[0, 1]), Err(Error::SingularBlock { .. })));
    }

    #[test]
    fn by_examples() {
        assert_eq!(by_adjust(&[0.03]).unwrap(), vec![0.03]);
        let adj = by_adjust(&[0.01, 0.02, 0.03]).unwrap();
        for a in adj {
            assert!((a - 0.055).abs() < 1e-12);
        }
        assert_eq!(by_adjust(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0; 3]);
        assert!(by_adjust(&[1.2]).is_err());
        assert!(by_adjust(&[f64::NAN]).is_err());
    }

    /// Brute-force step-up from the definition.
    fn by_reference(p: &[f64]) -> Vec<f64> {
        let m = p.len();
        let c: f64 = (1..=m).map(|i| 1.0 / i as f64).sum();
        (0..m)
            .map(|i| {
                let rank_i = (0..m).filter(|&j| p[j] < p[i] || (p[j] == p[i] && j <= i)).count();
                let mut best = 1.0f64;
                for j in 0..m {
                    let rank_j = (0..m).filter(|&l| p[l] < p[j] || (p[l] == p[j] && l <= j)).count();
                    if rank_j >= rank_i {
                        best = best.min(p[j] * m as f64 * c / rank_j as f64);
                    }
                }
                best
            })
            .collect()
    }

    #[test]
    fn by_matches_reference() {
        let mut rng = Rng::new(9);
        for _ in 0..100 {
            let m = 1 + rng.below(15);
            let p: Vec<f64> = (0..m).map(|_| rng.uniform() * rng.uniform()).collect();
            let got = by_adjust(&p).unwrap();
            let want = by_reference(&p);
            assert!(got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn ranking_order_and_ties() {
        let fs = summary(SymMatrix::identity(3), vec![0.1, 0.5, 0.1], 10, 1);
        let ranked = rank_nodes(&fs).unwrap();
        let nodes: Vec<usize> = ranked.iter().map(|r| r.node.unwrap()).collect();
        assert_eq!(nodes, vec![1, 0, 2]);
        assert_eq!(ranked.iter().map(|r| r.rank).collect::<Vec<_>>(), vec![1, 2, 3]);

        let single = summary(SymMatrix::identity(2), vec![0.0, 0.0], 10, 2);
        assert_eq!(rank_nodes(&single).unwrap()[0].rank, 1);
    }

    #[test]
    fn toy_dominance() {
        let tp = build_precision(&Graph::new(3, &[(0, 1)]).unwrap(), 2, 0.8, 0.2).unwrap();
        let mu = perturbation_from_snr(&tp, &[0], &[0.5]).unwrap();
        let r = stochastic_dominance_check(&tp, &mu, 0, 2000, 50, 4).unwrap();
        assert!(r.dominates);
        assert!(r.mean_statistic[1] > r.mean_statistic[2]);
        assert!((r.mean_statistic[2] - 2.0).abs() < 0.2);
        assert!(r.noncentrality[0] > r.noncentrality[1] && r.noncentrality[1] > r.noncentrality[2]);
    }
}
