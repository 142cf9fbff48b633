//! Ground-truth networks and data generation.
//!
//! A [`Graph`] over `p` nodes is turned into a block precision matrix by
//! [`build_precision`]; [`sample`] then draws case or control data from
//! `N(Σμ, Σ)` with `Σ = Ω⁻¹` (unit noise variance).

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, min_eigenvalue, spd_inverse, Cholesky, Matrix, NodeLayout, SymMatrix};
use crate::rng::Rng;

/// Step used when lifting the diagonal of `Ω` towards the eigenvalue floor.
pub const DIAGONAL_STEP: f64 = 0.05;
/// Smallest eigenvalue required of `Ω` before rescaling to unit diagonal.
pub const MIN_EIGENVALUE_FLOOR: f64 = 0.5;

/// Undirected simple graph over nodes `0..p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    p: usize,
    /// Sorted pairs `(a, b)` with `a < b`.
    edges: Vec<(usize, usize)>,
    /// Block label of each node.
    blocks: Vec<usize>,
}

impl Graph {
    pub fn new(p: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut out = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(Error::InvalidConfig("self-loops are not allowed"));
            }
            for node in [a, b] {
                if node >= p {
                    return Err(Error::NodeOutOfRange { node, p });
                }
            }
            out.push((a.min(b), a.max(b)));
        }
        out.sort_unstable();
        out.dedup();
        Ok(Graph { p, edges: out, blocks: vec![0; p] })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    /// Nodes in block `label`, ascending.
    pub fn block_members(&self, label: usize) -> Vec<usize> {
        (0..self.p).filter(|&i| self.blocks[i] == label).collect()
    }

    pub fn with_edge(mut self, a: usize, b: usize) -> Result<Self> {
        let mut edges = self.edges.clone();
        edges.push((a, b));
        let blocks = core::mem::take(&mut self.blocks);
        let mut g = Graph::new(self.p, &edges)?;
        g.blocks = blocks;
        Ok(g)
    }
}

/// Stochastic block model: each pair is linked independently with
/// `theta_within` inside a block and `theta_across` between blocks.
pub fn sbm_graph(
    p: usize,
    block_sizes: &[usize],
    theta_within: f64,
    theta_across: f64,
    seed: u64,
) -> Result<Graph> {
    if block_sizes.iter().sum::<usize>() != p {
        return Err(Error::InvalidConfig("block sizes must sum to p"));
    }
    if !(0.0..=1.0).contains(&theta_within) || !(0.0..=1.0).contains(&theta_across) {
        return Err(Error::InvalidConfig("edge probabilities must lie in [0, 1]"));
    }
    let blocks: Vec<usize> = block_sizes
        .iter()
        .enumerate()
        .flat_map(|(label, &size)| core::iter::repeat(label).take(size))
        .collect();
    let mut rng = Rng::new(seed);
    let mut edges = Vec::new();
    for a in 0..p {
        for b in (a + 1)..p {
            let prob = if blocks[a] == blocks[b] { theta_within } else { theta_across };
            if rng.bernoulli(prob) {
                edges.push((a, b));
            }
        }
    }
    Ok(Graph { p, edges, blocks })
}

/// Block precision matrix built from a graph, rescaled to unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruePrecision {
    pub layout: NodeLayout,
    pub omega: SymMatrix,
    pub rho_in: f64,
    pub rho_out: f64,
    /// Total amount added to the diagonal before rescaling.
    pub diagonal_lift: f64,
    /// Smallest eigenvalue after the lift and before rescaling.
    pub min_eigenvalue_unscaled: f64,
}

impl TruePrecision {
    pub fn covariance(&self) -> Result<SymMatrix> {
        spd_inverse(&self.omega)
    }
}

/// Assigns `-rho_in` within every node block and `-rho_out` to every entry of an
/// edge block, lifts the diagonal in steps of [`DIAGONAL_STEP`] until the
/// smallest eigenvalue is at least [`MIN_EIGENVALUE_FLOOR`], then rescales to
/// `D^{-1/2} Ω D^{-1/2}`.
pub fn build_precision(g: &Graph, k: usize, rho_in: f64, rho_out: f64) -> Result<TruePrecision> {
    if !(rho_in > 0.0 && rho_in < 1.0) || !(rho_out > 0.0 && rho_out < 1.0) {
        return Err(Error::InvalidConfig("partial correlations must lie in (0, 1)"));
    }
    let layout = NodeLayout::new(g.p(), k)?;
    let dim = layout.dim();
    let mut m = Matrix::identity(dim);
    for node in 0..g.p() {
        for a in layout.node_range(node) {
            for b in layout.node_range(node) {
                if a != b {
                    m[(a, b)] = -rho_in;
                }
            }
        }
    }
    for &(u, v) in g.edges() {
        for a in layout.node_range(u) {
            for b in layout.node_range(v) {
                m[(a, b)] = -rho_out;
                m[(b, a)] = -rho_out;
            }
        }
    }
    let mut omega = SymMatrix::from_matrix(m)?;
    let mut lift = 0.0;
    let mut min_eig = min_eigenvalue(&omega)?;
    while min_eig < MIN_EIGENVALUE_FLOOR {
        omega = omega.add_diagonal(DIAGONAL_STEP);
        lift += DIAGONAL_STEP;
        min_eig = min_eigenvalue(&omega)?;
    }
    let scale: Vec<f64> = omega.diag().iter().map(|d| 1.0 / libm::sqrt(*d)).collect();
    let scaled = SymMatrix::from_fn(dim, |i, j| {
        if i == j {
            1.0
        } else {
            omega.get(i, j) * scale[i] * scale[j]
        }
    })?;
    Ok(TruePrecision {
        layout,
        omega: scaled,
        rho_in,
        rho_out,
        diagonal_lift: lift,
        min_eigenvalue_unscaled: min_eig,
    })
}

/// Sparse mean shift applied to whole nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub mu: Vec<f64>,
    pub nodes: Vec<usize>,
    pub snr: Vec<f64>,
}

impl PerturbationSpec {
    pub fn zero(dim: usize) -> Self {
        PerturbationSpec { mu: vec![0.0; dim], nodes: Vec::new(), snr: Vec::new() }
    }

    /// Arbitrary shift; `nodes` lists the nodes with a nonzero entry.
    pub fn from_mu(layout: &NodeLayout, mu: Vec<f64>) -> Result<Self> {
        if mu.len() != layout.dim() {
            return Err(Error::DimensionMismatch { expected: layout.dim(), found: mu.len() });
        }
        let nodes = (0..layout.p())
            .filter(|&i| layout.node_range(i).any(|j| mu[j] != 0.0))
            .collect();
        Ok(PerturbationSpec { mu, nodes, snr: Vec::new() })
    }
}

/// Every attribute of node `nodes[i]` is shifted by `snr[i]` times the
/// (unit) diagonal of `Ω`.
pub fn perturbation_from_snr(tp: &TruePrecision, nodes: &[usize], snr: &[f64]) -> Result<PerturbationSpec> {
    if nodes.is_empty() {
        return Err(Error::InvalidConfig("at least one perturbed node is required"));
    }
    if nodes.len() != snr.len() {
        return Err(Error::DimensionMismatch { expected: nodes.len(), found: snr.len() });
    }
    if snr.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidConfig("SNR must be positive"));
    }
    let layout = &tp.layout;
    let mut mu = vec![0.0; layout.dim()];
    for (&node, &s) in nodes.iter().zip(snr) {
        if node >= layout.p() {
            return Err(Error::NodeOutOfRange { node, p: layout.p() });
        }
        for j in layout.node_range(node) {
            mu[j] = s * tp.omega.get(j, j);
        }
    }
    Ok(PerturbationSpec { mu, nodes: nodes.to_vec(), snr: snr.to_vec() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Control,
    Case,
}

/// `n × pK` sample matrix ordered by the layout's flat index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub layout: NodeLayout,
    samples: Matrix,
    pub condition: Condition,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn new(layout: NodeLayout, samples: Matrix, condition: Condition) -> Result<Self> {
        if samples.cols() != layout.dim() {
            return Err(Error::DimensionMismatch { expected: layout.dim(), found: samples.cols() });
        }
        if samples.rows() < 2 {
            return Err(Error::TooFewSamples { needed: 2, found: samples.rows() });
        }
        if !samples.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Dataset { layout, samples, condition, seed: None })
    }

    pub fn n(&self) -> usize {
        self.samples.rows()
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for i in 0..self.n() {
            for (acc, x) in m.iter_mut().zip(self.samples.row(i)) {
                *acc += x;
            }
        }
        let n = self.n() as f64;
        m.iter_mut().for_each(|x| *x /= n);
        m
    }

    /// Restricts the columns to one attribute type, giving a `K = 1` dataset.
    pub fn attribute(&self, attribute: usize) -> Result<Dataset> {
        if attribute >= self.layout.k() {
            return Err(Error::IndexOutOfRange { index: attribute, dim: self.layout.k() });
        }
        let cols = self.layout.attribute_indices(attribute);
        let samples = Matrix::from_fn(self.n(), cols.len(), |i, j| self.samples[(i, cols[j])]);
        let mut layout = NodeLayout::new(self.layout.p(), 1)?;
        if let Some(names) = self.layout.node_names() {
            layout = layout.with_node_names(names.to_vec())?;
        }
        Ok(Dataset { layout, samples, condition: self.condition, seed: self.seed })
    }

    /// Keeps the listed rows (in order). Fewer than two rows is an error.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let samples = Matrix::from_fn(rows.len(), self.dim(), |i, j| self.samples[(rows[i], j)]);
        let mut d = Dataset::new(self.layout.clone(), samples, self.condition)?;
        d.seed = self.seed;
        Ok(d)
    }
}

/// Draws from `N(Σμ, Σ)` for a fixed precision matrix.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    layout: NodeLayout,
    sigma: SymMatrix,
    chol: Cholesky,
}

impl GaussianSampler {
    pub fn new(layout: NodeLayout, omega: &SymMatrix) -> Result<Self> {
        if omega.dim() != layout.dim() {
            return Err(Error::DimensionMismatch { expected: layout.dim(), found: omega.dim() });
        }
        let sigma = spd_inverse(omega)?;
        let chol = cholesky(&sigma)?;
        Ok(GaussianSampler { layout, sigma, chol })
    }

    pub fn from_precision(tp: &TruePrecision) -> Result<Self> {
        Self::new(tp.layout.clone(), &tp.omega)
    }

    pub fn sigma(&self) -> &SymMatrix {
        &self.sigma
    }

    pub fn layout(&self) -> &NodeLayout {
        &self.layout
    }

    /// `Σμ`, or zero when `mu` is `None`.
    pub fn mean(&self, mu: Option<&PerturbationSpec>) -> Result<Vec<f64>> {
        match mu {
            Some(spec) => self.sigma.matvec(&spec.mu),
            None => Ok(vec![0.0; self.layout.dim()]),
        }
    }

    fn correlated(&self, z: &[f64]) -> Vec<f64> {
        let l = self.chol.lower();
        (0..z.len()).map(|i| crate::linalg::dot(&l.row(i)[..=i], &z[..=i])).collect()
    }

    pub fn sample(
        &self,
        mu: Option<&PerturbationSpec>,
        n: usize,
        seed: u64,
        condition: Condition,
    ) -> Result<Dataset> {
        if n < 2 {
            return Err(Error::TooFewSamples { needed: 2, found: n });
        }
        let mean = self.mean(mu)?;
        let dim = self.layout.dim();
        let mut rng = Rng::new(seed);
        let mut samples = Matrix::zeros(n, dim);
        for i in 0..n {
            let z = rng.normals(dim);
            let x = self.correlated(&z);
            for ((out, xi), m) in samples.row_mut(i).iter_mut().zip(&x).zip(&mean) {
                *out = m + xi;
            }
        }
        let mut d = Dataset::new(self.layout.clone(), samples, condition)?;
        d.seed = Some(seed);
        Ok(d)
    }

    /// Draws the sample mean of `n` rows directly: `ȳ ~ N(Σμ, Σ/n)`.
    pub fn sample_mean(&self, mean: &[f64], n: usize, rng: &mut Rng) -> Vec<f64> {
        let z = rng.normals(self.layout.dim());
        let scale = 1.0 / libm::sqrt(n as f64);
        self.correlated(&z).iter().zip(mean).map(|(x, m)| m + scale * x).collect()
    }
}

/// Rows i.i.d. `N(Σμ, Σ)` with `Σ = Ω⁻¹`; deterministic for a given seed.
pub fn sample(tp: &TruePrecision, mu: Option<&PerturbationSpec>, n: usize, seed: u64) -> Result<Dataset> {
    let condition = if mu.is_some() { Condition::Case } else { Condition::Control };
    GaussianSampler::from_precision(tp)?.sample(mu, n, seed, condition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::submatrix;

    fn toy() -> TruePrecision {
        let g = Graph::new(3, &[(0, 1)]).unwrap();
        build_precision(&g, 2, 0.8, 0.2).unwrap()
    }

    #[test]
    fn sbm_degenerate_probabilities() {
        let g = sbm_graph(4, &[2, 2], 1.0, 0.0, 11).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (2, 3)]);
        let empty = sbm_graph(4, &[2, 2], 0.0, 0.0, 11).unwrap();
        assert!(empty.edges().is_empty());
        assert!(sbm_graph(4, &[2, 1], 0.5, 0.5, 1).is_err());
        assert!(sbm_graph(4, &[2, 2], 1.5, 0.5, 1).is_err());
    }

    #[test]
    fn sbm_within_block_edge_count_matches_binomial_mean() {
        let mut total = 0usize;
        let reps = 1000;
        for seed in 0..reps {
            let g = sbm_graph(20, &[10, 10], 0.4, 0.2, seed).unwrap();
            total += g.edges().iter().filter(|&&(a, b)| g.blocks()[a] == g.blocks()[b]).count();
        }
        let mean = total as f64 / reps as f64;
        assert!((mean - 36.0).abs() < 1.5, "mean within-block edges {mean}");
    }

    #[test]
    fn sbm_is_deterministic() {
        assert_eq!(sbm_graph(20, &[10, 10], 0.4, 0.2, 5), sbm_graph(20, &[10, 10], 0.4, 0.2, 5));
    }

    #[test]
    fn empty_graph_single_attribute_is_identity() {
        let g = Graph::new(5, &[]).unwrap();
        let tp = build_precision(&g, 1, 0.8, 0.2).unwrap();
        assert_eq!(tp.omega, SymMatrix::identity(5));
    }

    #[test]
    fn toy_precision_structure() {
        let tp = toy();
        let omega = &tp.omega;
        assert!(tp.min_eigenvalue_unscaled >= MIN_EIGENVALUE_FLOOR);
        for i in 0..6 {
            assert!((omega.get(i, i) - 1.0).abs() < 1e-12);
        }
        // Node 2 is isolated: its off-diagonal blocks are exactly zero.
        let iso = submatrix(omega.as_matrix(), &[4, 5], &[0, 1, 2, 3]).unwrap();
        assert!(iso.as_slice().iter().all(|&x| x == 0.0));
        // All four entries of the edge block share one negative value.
        let edge = submatrix(omega.as_matrix(), &[0, 1], &[2, 3]).unwrap();
        assert!(edge.as_slice().iter().all(|&x| x < 0.0 && x == edge[(0, 0)]));
        assert!(omega.get(0, 1) < edge[(0, 0)]);
        assert!(min_eigenvalue(omega).unwrap() > 0.0);
    }

    #[test]
    fn lift_is_needed_for_strong_within_node_correlation() {
        // Eigenvalues of [[1, -0.8], [-0.8, 1]] are 0.2 and 1.8.
        let tp = build_precision(&Graph::new(2, &[]).unwrap(), 2, 0.8, 0.2).unwrap();
        assert!((tp.diagonal_lift - 0.30).abs() < 1e-9);
        assert!((tp.omega.get(0, 1) + 0.8 / 1.3).abs() < 1e-12);
    }

    #[test]
    fn snr_perturbation() {
        let g = Graph::new(20, &[]).unwrap();
        let tp = build_precision(&g, 2, 0.8, 0.2).unwrap();
        let spec = perturbation_from_snr(&tp, &[0], &[0.2]).unwrap();
        assert_eq!(&spec.mu[..2], &[0.2, 0.2]);
        assert!(spec.mu[2..].iter().all(|&x| x == 0.0));
        assert!(perturbation_from_snr(&tp, &[0], &[0.0]).is_err());
        assert_eq!(
            perturbation_from_snr(&tp, &[20], &[0.1]).unwrap_err(),
            Error::NodeOutOfRange { node: 20, p: 20 }
        );
        let two = perturbation_from_snr(&tp, &[0, 15], &[0.2, 0.1]).unwrap();
        assert_eq!(two.mu[30], 0.1);
        assert_eq!(two.mu[31], 0.1);
        assert_eq!(two.nodes, vec![0, 15]);
    }

    #[test]
    fn sample_mean_within_clt_bound() {
        let g = Graph::new(2, &[(0, 1)]).unwrap();
        let tp = build_precision(&g, 1, 0.5, 0.4).unwrap();
        let sigma = tp.covariance().unwrap();
        let n = 50_000;
        let d = sample(&tp, None, n, 3).unwrap();
        for (j, m) in d.mean().iter().enumerate() {
            assert!(m.abs() < 3.0 * libm::sqrt(sigma.get(j, j) / n as f64));
        }
        let spec = PerturbationSpec { mu: vec![1.0, -0.5], nodes: vec![0, 1], snr: vec![] };
        let target = sigma.matvec(&spec.mu).unwrap();
        let d = sample(&tp, Some(&spec), n, 4).unwrap();
        for (j, m) in d.mean().iter().enumerate() {
            assert!((m - target[j]).abs() < 3.0 * libm::sqrt(sigma.get(j, j) / n as f64));
        }
    }

    #[test]
    fn sample_is_deterministic() {
        let tp = toy();
        assert_eq!(sample(&tp, None, 10, 9).unwrap(), sample(&tp, None, 10, 9).unwrap());
        assert!(sample(&tp, None, 1, 9).is_err());
    }

    #[test]
    fn empirical_covariance_recovers_sigma() {
        let g = Graph::new(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let tp = build_precision(&g, 2, 0.6, 0.3).unwrap();
        let sigma = tp.covariance().unwrap();
        let d = sample(&tp, None, 100_000, 21).unwrap();
        let s = crate::estimate::sample_covariance(&d).unwrap();
        let err = s.as_matrix().sub(sigma.as_matrix()).unwrap().max_abs();
        assert!(err < 0.05, "max abs error {err}");
    }

    #[test]
    fn filtered_mean_converges_to_mu() {
        let tp = toy();
        let spec = perturbation_from_snr(&tp, &[0], &[1.0]).unwrap();
        let d = sample(&tp, Some(&spec), 100_000, 33).unwrap();
        let z = tp.omega.matvec(&d.mean()).unwrap();
        for (zj, mj) in z.iter().zip(&spec.mu) {
            assert!((zj - mj).abs() < 0.03, "{zj} vs {mj}");
        }
    }
}
