//! Sensitivity of a node statistic to error in the working precision matrix.
//!
//! With true `Ω` and working `Ω̃`, the statistics of node 1 differ by
//! `T₁ − T̃₁ = Xᵀ D X`, where `X = √n ȳ₁ ~ N(√n Σ₁·μ, Σ₁₁)` and `D` is the
//! difference of the Schur complements of the node block. Diagonalizing
//! `DΣ₁₁` writes the difference as `Σ a_k χ²_{r_k}(δ_k)` with independent terms,
//! so that
//!
//! ```text
//! E = tr(DΣ₁₁) + n mᵀ D m
//! V = 2 tr((DΣ₁₁)²) + 4n mᵀ D Σ₁₁ D m,       m = Σ₁·μ.
//! ```

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtertest::{group_statistic, FilteredSummary};
use crate::linalg::{
    cholesky, complement, dot, quadform, spd_inverse, spectral_norm, submatrix, sym_eigen, sym_function, Matrix,
    NodeLayout, SymMatrix,
};
use crate::netmodel::{GaussianSampler, PerturbationSpec};
use crate::rng::Rng;

/// Eigenvalues of `DΣ₁₁` closer than this (relative) are merged.
pub const MULTIPLICITY_TOL: f64 = 1e-8;

fn check_pair(omega: &SymMatrix, omega_tilde: &SymMatrix, node: usize, layout: &NodeLayout) -> Result<()> {
    for m in [omega, omega_tilde] {
        if m.dim() != layout.dim() {
            return Err(Error::DimensionMismatch { expected: layout.dim(), found: m.dim() });
        }
    }
    if node >= layout.p() {
        return Err(Error::NodeOutOfRange { node, p: layout.p() });
    }
    Ok(())
}

/// `Ω₁₁ − Ω₁·Ω··⁻¹Ω·₁` for the given node, which equals `(Σ₁₁)⁻¹`.
pub fn node_schur_complement(omega: &SymMatrix, node: usize, layout: &NodeLayout) -> Result<SymMatrix> {
    let own: Vec<usize> = layout.node_range(node).collect();
    let rest = complement(layout.dim(), &own);
    let o11 = omega.principal(&own)?;
    if rest.is_empty() {
        return Ok(o11);
    }
    let chol = cholesky(&omega.principal(&rest)?).map_err(|_| Error::SingularBlock { condition: f64::INFINITY })?;
    let cross = submatrix(omega.as_matrix(), &rest, &own)?;
    // W = L⁻¹ Ω·₁, so Ω₁·Ω··⁻¹Ω·₁ = WᵀW.
    let k = own.len();
    let mut w = Matrix::zeros(rest.len(), k);
    for c in 0..k {
        let mut col: Vec<f64> = (0..rest.len()).map(|r| cross[(r, c)]).collect();
        chol.forward_in_place(&mut col);
        for (r, v) in col.into_iter().enumerate() {
            w[(r, c)] = v;
        }
    }
    let correction = w.transpose().matmul(&w)?;
    SymMatrix::from_matrix(o11.as_matrix().sub(&correction)?)
}

/// `D = S(Ω) − S(Ω̃)` with `S` the node's Schur complement.
pub fn discrepancy_matrix(omega: &SymMatrix, omega_tilde: &SymMatrix, node: usize, layout: &NodeLayout) -> Result<SymMatrix> {
    check_pair(omega, omega_tilde, node, layout)?;
    let a = node_schur_complement(omega, node, layout)?;
    let b = node_schur_complement(omega_tilde, node, layout)?;
    SymMatrix::from_matrix(a.as_matrix().sub(b.as_matrix())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub node: usize,
    pub n: usize,
    pub d_matrix: SymMatrix,
    /// Distinct eigenvalues `a_k` of `DΣ₁₁`, ascending.
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<usize>,
    /// Spectral projectors `E_k` of `DΣ₁₁` (not symmetric in general).
    pub projectors: Vec<Matrix>,
    /// `δ_k = n mᵀ E_k Σ₁₁⁻¹ m`.
    pub noncentralities: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// `Σ a_k (r_k + δ_k)`.
    pub mixture_mean: f64,
    /// `Σ a_k² (2 r_k + 4 δ_k)`.
    pub mixture_variance: f64,
}

/// Spectral decomposition and moments of `T₁ − T̃₁`. `Σ` is taken from `omega`.
pub fn discrepancy_moments(
    omega: &SymMatrix,
    omega_tilde: &SymMatrix,
    node: usize,
    layout: &NodeLayout,
    mu: Option<&PerturbationSpec>,
    n: usize,
) -> Result<DiscrepancyReport> {
    let d = discrepancy_matrix(omega, omega_tilde, node, layout)?;
    let sigma = spd_inverse(omega)?;
    let own: Vec<usize> = layout.node_range(node).collect();
    let s11 = sigma.principal(&own)?;
    cholesky(&s11)?;
    let k = own.len();

    let m: Vec<f64> = match mu {
        Some(spec) => {
            if spec.mu.len() != layout.dim() {
                return Err(Error::DimensionMismatch { expected: layout.dim(), found: spec.mu.len() });
            }
            let full = sigma.matvec(&spec.mu)?;
            own.iter().map(|&j| full[j]).collect()
        }
        None => vec![0.0; k],
    };
    let nf = n as f64;

    let ds = d.as_matrix().matmul(s11.as_matrix())?;
    let ds2 = ds.matmul(&ds)?;
    let dm = d.matvec(&m)?;
    let mean = ds.trace() + nf * dot(&m, &dm);
    let variance = 2.0 * ds2.trace() + 4.0 * nf * quadform(&dm, &s11)?;

    // Σ₁₁^{1/2} D Σ₁₁^{1/2} is similar to DΣ₁₁ and symmetric.
    let root = sym_function(&s11, libm::sqrt);
    let inv_root = sym_function(&s11, |x| 1.0 / libm::sqrt(x));
    let b = SymMatrix::from_matrix(root.as_matrix().matmul(d.as_matrix())?.matmul(root.as_matrix())?)?;
    let eig = sym_eigen(&b);
    let scale = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (j, &v) in eig.values.iter().enumerate() {
        let joins = groups.last().is_some_and(|g| {
            let u = eig.values[g[0]];
            (v - u).abs() <= MULTIPLICITY_TOL * u.abs().max(v.abs()).max(1e-8 * scale).max(f64::MIN_POSITIVE)
        });
        if joins {
            groups.last_mut().expect("nonempty").push(j);
        } else {
            groups.push(vec![j]);
        }
    }

    let whitened = inv_root.matvec(&m)?;
    let mut eigenvalues = Vec::new();
    let mut multiplicities = Vec::new();
    let mut projectors = Vec::new();
    let mut noncentralities = Vec::new();
    for g in &groups {
        let a = g.iter().map(|&j| eig.values[j]).sum::<f64>() / g.len() as f64;
        // P = Σ u uᵀ over the group; E = Σ₁₁^{-1/2} P Σ₁₁^{1/2}.
        let p = Matrix::from_fn(k, k, |r, c| g.iter().map(|&j| eig.vectors[(r, j)] * eig.vectors[(c, j)]).sum());
        let e = inv_root.as_matrix().matmul(&p)?.matmul(root.as_matrix())?;
        let proj = p.matvec(&whitened)?;
        eigenvalues.push(a);
        multiplicities.push(g.len());
        projectors.push(e);
        noncentralities.push(nf * dot(&proj, &proj));
    }
    let mixture_mean = eigenvalues
        .iter()
        .zip(&multiplicities)
        .zip(&noncentralities)
        .map(|((a, &r), d)| a * (r as f64 + d))
        .sum();
    let mixture_variance = eigenvalues
        .iter()
        .zip(&multiplicities)
        .zip(&noncentralities)
        .map(|((a, &r), d)| a * a * (2.0 * r as f64 + 4.0 * d))
        .sum();

    Ok(DiscrepancyReport {
        node,
        n,
        d_matrix: d,
        eigenvalues,
        multiplicities,
        projectors,
        noncentralities,
        mean,
        variance,
        mixture_mean,
        mixture_variance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRatios {
    pub delta_norm: f64,
    /// `|E[T₁ − T̃₁]| / ‖Δ‖₂`.
    pub mean_ratio: f64,
    /// `Var[T₁ − T̃₁] / ‖Δ‖₂²`.
    pub variance_ratio: f64,
}

/// Moments relative to the spectral norm of `Δ = Ω̃ − Ω`; both ratios are 0
/// when `Δ = 0`.
pub fn spectral_norm_bound(
    omega: &SymMatrix,
    omega_tilde: &SymMatrix,
    node: usize,
    layout: &NodeLayout,
    mu: Option<&PerturbationSpec>,
    n: usize,
) -> Result<NormRatios> {
    check_pair(omega, omega_tilde, node, layout)?;
    let delta = SymMatrix::from_matrix(omega_tilde.as_matrix().sub(omega.as_matrix())?)?;
    let delta_norm = spectral_norm(&delta);
    if delta_norm == 0.0 {
        return Ok(NormRatios { delta_norm, mean_ratio: 0.0, variance_ratio: 0.0 });
    }
    let r = discrepancy_moments(omega, omega_tilde, node, layout, mu, n)?;
    Ok(NormRatios {
        delta_norm,
        mean_ratio: r.mean.abs() / delta_norm,
        variance_ratio: r.variance / (delta_norm * delta_norm),
    })
}

/// Draws `T₁ − T̃₁` from simulated case means under the true network.
#[allow(clippy::too_many_arguments)]
pub fn sample_discrepancy(
    omega: &SymMatrix,
    omega_tilde: &SymMatrix,
    node: usize,
    layout: &NodeLayout,
    mu: Option<&PerturbationSpec>,
    n: usize,
    n_reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_pair(omega, omega_tilde, node, layout)?;
    let sampler = GaussianSampler::new(layout.clone(), omega)?;
    let sigma = sampler.sigma().clone();
    let sigma_tilde = spd_inverse(omega_tilde)?;
    let mean = sampler.mean(mu)?;
    let group: Vec<usize> = layout.node_range(node).collect();
    let mut rng = Rng::new(seed);
    (0..n_reps)
        .map(|_| {
            let ybar = sampler.sample_mean(&mean, n, &mut rng);
            let t = FilteredSummary::from_mean(layout.clone(), ybar.clone(), n, omega.clone(), sigma.clone())?;
            let tt = FilteredSummary::from_mean(layout.clone(), ybar, n, omega_tilde.clone(), sigma_tilde.clone())?;
            Ok(group_statistic(&t, &group)? - group_statistic(&tt, &group)?)
        })
        .collect()
}

/// Draws from `Σ a_k χ²_{r_k}(δ_k)`.
pub fn sample_mixture(report: &DiscrepancyReport, n_draws: usize, seed: u64) -> Vec<f64> {
    let mut rng = Rng::new(seed);
    (0..n_draws)
        .map(|_| {
            report
                .eigenvalues
                .iter()
                .zip(&report.multiplicities)
                .zip(&report.noncentralities)
                .map(|((a, &r), &d)| a * rng.noncentral_chi_square(r, d))
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_spd(dim: usize, seed: u64) -> SymMatrix {
        let mut rng = Rng::new(seed);
        let a = Matrix::from_fn(dim, dim, |_, _| 0.4 * rng.normal());
        SymMatrix::from_matrix(a.matmul(&a.transpose()).unwrap()).unwrap().add_diagonal(1.0)
    }

    #[test]
    fn identical_networks_have_no_discrepancy() {
        let layout = NodeLayout::new(3, 2).unwrap();
        let omega = random_spd(6, 1);
        let mu = PerturbationSpec::from_mu(&layout, vec![0.3; 6]).unwrap();
        let r = discrepancy_moments(&omega, &omega, 1, &layout, Some(&mu), 50).unwrap();
        assert!(r.d_matrix.as_matrix().max_abs() < 1e-12);
        assert!(r.mean.abs() < 1e-10 && r.variance.abs() < 1e-10);
        assert_eq!(r.multiplicities, vec![2]);
        let ratios = spectral_norm_bound(&omega, &omega, 1, &layout, Some(&mu), 50).unwrap();
        assert_eq!((ratios.mean_ratio, ratios.variance_ratio), (0.0, 0.0));
    }

    #[test]
    fn decoupled_case_recovers_block_change() {
        let layout = NodeLayout::new(2, 2).unwrap();
        let omega = SymMatrix::new(4, vec![2.0, 0.5, 0.0, 0.0, 0.5, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.2, 0.0, 0.0, 0.2, 1.0])
            .unwrap();
        let delta = SymMatrix::new(4, vec![0.3, -0.1, 0.0, 0.0, -0.1, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
            .unwrap();
        let tilde = SymMatrix::from_matrix(omega.as_matrix().sub(delta.as_matrix()).unwrap()).unwrap();
        let d = discrepancy_matrix(&omega, &tilde, 0, &layout).unwrap();
        assert!(d.as_matrix().sub(&submatrix(delta.as_matrix(), &[0, 1], &[0, 1]).unwrap()).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn schur_matches_full_inverse() {
        let layout = NodeLayout::new(4, 2).unwrap();
        for seed in 0..20 {
            let a = random_spd(8, seed);
            let b = random_spd(8, seed + 100);
            for node in 0..4 {
                let d = discrepancy_matrix(&a, &b, node, &layout).unwrap();
                let idx: Vec<usize> = layout.node_range(node).collect();
                let sa = spd_inverse(&spd_inverse(&a).unwrap().principal(&idx).unwrap()).unwrap();
                let sb = spd_inverse(&spd_inverse(&b).unwrap().principal(&idx).unwrap()).unwrap();
                let oracle = sa.as_matrix().sub(sb.as_matrix()).unwrap();
                assert!(d.as_matrix().sub(&oracle).unwrap().max_abs() < 1e-9);
            }
        }
    }

    #[test]
    fn moments_consistent_with_mixture() {
        let layout = NodeLayout::new(3, 3).unwrap();
        for seed in 0..20 {
            let a = random_spd(9, seed);
            let b = random_spd(9, seed + 50);
            let mu = PerturbationSpec::from_mu(&layout, Rng::new(seed).normals(9)).unwrap();
            let r = discrepancy_moments(&a, &b, 2, &layout, Some(&mu), 30).unwrap();
            assert!((r.mean - r.mixture_mean).abs() < 1e-8 * r.mean.abs().max(1.0));
            assert!((r.variance - r.mixture_variance).abs() < 1e-8 * r.variance.abs().max(1.0));
            assert_eq!(r.multiplicities.iter().sum::<usize>(), 3);
        }
    }

    #[test]
    fn zero_mean_specialization() {
        let layout = NodeLayout::new(3, 2).unwrap();
        let a = random_spd(6, 7);
        let b = random_spd(6, 8);
        let r = discrepancy_moments(&a, &b, 0, &layout, None, 30).unwrap();
        let s11 = spd_inverse(&a).unwrap().principal(&[0, 1]).unwrap();
        let ds = r.d_matrix.as_matrix().matmul(s11.as_matrix()).unwrap();
        assert!((r.mean - ds.trace()).abs() < 1e-12);
        assert!((r.variance - 2.0 * ds.matmul(&ds).unwrap().trace()).abs() < 1e-12);
        assert!(r.noncentralities.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn repeated_eigenvalues_are_grouped() {
        let layout = NodeLayout::new(1, 3).unwrap();
        let omega = SymMatrix::identity(3);
        let tilde = SymMatrix::diagonal(&[0.5, 0.5, 0.8]);
        let r = discrepancy_moments(&omega, &tilde, 0, &layout, None, 10).unwrap();
        assert_eq!(r.multiplicities, vec![1, 2]);
        assert!((r.eigenvalues[0] - 0.2).abs() < 1e-12 && (r.eigenvalues[1] - 0.5).abs() < 1e-12);
    }
}
