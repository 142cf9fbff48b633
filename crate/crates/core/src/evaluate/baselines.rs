use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{estimate_precision, EstimatorSettings, PenaltyWeights};
use crate::filtertest::{filter, group_statistic, ranks_descending, FilteredSummary};
use crate::linalg::{cholesky, condition_number, Matrix, SymMatrix};
use crate::netmodel::Dataset;

use crate::filtertest::SINGULAR_CONDITION;

fn check_pair(case: &Dataset, control: &Dataset) -> Result<()> {
    if case.layout.p() != control.layout.p() || case.layout.k() != control.layout.k() {
        return Err(Error::DimensionMismatch { expected: control.dim(), found: case.dim() });
    }
    Ok(())
}

fn column_mean(d: &Dataset, j: usize) -> f64 {
    (0..d.n()).map(|i| d.samples()[(i, j)]).sum::<f64>() / d.n() as f64
}

/// Two-sample Hotelling `T²` on the node's attributes with pooled covariance.
pub fn hotelling_t2(case: &Dataset, control: &Dataset, node: usize) -> Result<f64> {
    check_pair(case, control)?;
    let layout = &case.layout;
    if node >= layout.p() {
        return Err(Error::NodeOutOfRange { node, p: layout.p() });
    }
    let k = layout.k();
    for d in [case, control] {
        if d.n() < k + 2 {
            return Err(Error::TooFewSamples { needed: k + 2, found: d.n() });
        }
    }
    let idx: Vec<usize> = layout.node_range(node).collect();
    let (n1, n2) = (case.n(), control.n());
    let m1: Vec<f64> = idx.iter().map(|&j| column_mean(case, j)).collect();
    let m2: Vec<f64> = idx.iter().map(|&j| column_mean(control, j)).collect();
    let mut scatter = Matrix::zeros(k, k);
    for (d, m) in [(case, &m1), (control, &m2)] {
        for i in 0..d.n() {
            let row = d.samples().row(i);
            for a in 0..k {
                for b in 0..k {
                    scatter[(a, b)] += (row[idx[a]] - m[a]) * (row[idx[b]] - m[b]);
                }
            }
        }
    }
    let pooled = SymMatrix::from_matrix(scatter.scale(1.0 / (n1 + n2 - 2) as f64))?;
    let condition = condition_number(&pooled);
    if !(condition <= SINGULAR_CONDITION) {
        return Err(Error::SingularBlock { condition });
    }
    let diff: Vec<f64> = m1.iter().zip(&m2).map(|(a, b)| a - b).collect();
    let chol = cholesky(&pooled).map_err(|_| Error::SingularBlock { condition })?;
    Ok((n1 * n2) as f64 / (n1 + n2) as f64 * chol.inv_quadform(&diff)?)
}

/// Pooled two-sample `t` statistic for one attribute column (flat index).
pub fn ttest_rank(case: &Dataset, control: &Dataset, attribute: usize) -> Result<f64> {
    check_pair(case, control)?;
    if attribute >= case.dim() {
        return Err(Error::IndexOutOfRange { index: attribute, dim: case.dim() });
    }
    let (n1, n2) = (case.n(), control.n());
    let m1 = column_mean(case, attribute);
    let m2 = column_mean(control, attribute);
    let ss = |d: &Dataset, m: f64| (0..d.n()).map(|i| {
        let x = d.samples()[(i, attribute)] - m;
        x * x
    }).sum::<f64>();
    let pooled = (ss(case, m1) + ss(control, m2)) / (n1 + n2 - 2) as f64;
    if !(pooled > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok((m1 - m2) / libm::sqrt(pooled * (1.0 / n1 as f64 + 1.0 / n2 as f64)))
}

/// One network per attribute type, assembled with zero cross-type entries.
/// The flag reports whether every selected fit converged.
pub fn separated_precision(control: &Dataset, settings: &EstimatorSettings) -> Result<(SymMatrix, bool)> {
    let layout = &control.layout;
    if layout.k() < 2 {
        return Err(Error::InvalidConfig("separated filtering needs at least two attribute types"));
    }
    let dim = layout.dim();
    let mut omega = Matrix::zeros(dim, dim);
    let mut converged = true;
    for a in 0..layout.k() {
        let d = control.attribute(a)?;
        let path = estimate_precision(&d, &PenaltyWeights::uniform(layout.p()), settings)?;
        let best = path.best_result();
        converged &= best.converged;
        let idx = layout.attribute_indices(a);
        for (i, &fi) in idx.iter().enumerate() {
            for (j, &fj) in idx.iter().enumerate() {
                omega[(fi, fj)] = best.omega_hat.get(i, j);
            }
        }
    }
    Ok((SymMatrix::from_matrix(omega)?, converged))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatedRanking {
    /// Single-attribute statistics by flat index.
    pub attribute_statistics: Vec<f64>,
    /// 1-based rank of each attribute among all `pK`.
    pub attribute_ranks: Vec<usize>,
    /// Nodes ranked by their worst-ranked attribute, so a node comes first
    /// only when all of its attributes outrank every other node's weakest one.
    pub node_ranks: Vec<usize>,
}

impl SeparatedRanking {
    pub fn from_summary(fs: &FilteredSummary) -> Result<Self> {
        let layout = &fs.layout;
        let attribute_statistics = (0..layout.dim()).map(|j| group_statistic(fs, &[j])).collect::<Result<Vec<_>>>()?;
        let attribute_ranks = ranks_descending(&attribute_statistics);
        let worst: Vec<f64> = (0..layout.p())
            .map(|node| layout.node_range(node).map(|j| attribute_statistics[j]).fold(f64::INFINITY, f64::min))
            .collect();
        let node_ranks = ranks_descending(&worst);
        Ok(SeparatedRanking { attribute_statistics, attribute_ranks, node_ranks })
    }
}

/// Separated filtering end to end: per-type estimation on controls, then
/// attribute-level tests on the cases.
pub fn separated_nf_rank(case: &Dataset, control: &Dataset, settings: &EstimatorSettings) -> Result<SeparatedRanking> {
    check_pair(case, control)?;
    let (omega, _) = separated_precision(control, settings)?;
    SeparatedRanking::from_summary(&filter(case, &omega)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::linalg::NodeLayout;
    use crate::netmodel::{build_precision, sample, Condition, Graph};
    use crate::rng::Rng;

    fn data(rows: &[&[f64]], k: usize) -> Dataset {
        let cols = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Dataset::new(NodeLayout::new(cols / k, k).unwrap(), Matrix::from_vec(rows.len(), cols, flat).unwrap(), Condition::Case)
            .unwrap()
    }

    #[test]
    fn ttest_textbook() {
        let a = data(&[&[1.0], &[2.0], &[3.0], &[4.0]], 1);
        let b = data(&[&[2.0], &[4.0], &[6.0]], 1);
        // means 2.5 and 4, pooled var (5 + 8)/5 = 2.6
        let want = (2.5 - 4.0) / libm::sqrt(2.6 * (0.25 + 1.0 / 3.0));
        assert!((ttest_rank(&a, &b, 0).unwrap() - want).abs() < 1e-12);
        assert_eq!(ttest_rank(&a, &a, 0).unwrap(), 0.0);
        let flat = data(&[&[1.0], &[1.0]], 1);
        assert_eq!(ttest_rank(&flat, &flat, 0).unwrap_err(), Error::ZeroVariance);
    }

    #[test]
    fn hotelling_reduces_to_squared_t() {
        let mut rng = Rng::new(1);
        let layout = NodeLayout::new(2, 1).unwrap();
        for _ in 0..10 {
            let a = Dataset::new(layout.clone(), Matrix::from_fn(8, 2, |_, _| rng.normal()), Condition::Case).unwrap();
            let b = Dataset::new(layout.clone(), Matrix::from_fn(11, 2, |_, _| rng.normal() + 0.5), Condition::Control)
                .unwrap();
            let t = ttest_rank(&a, &b, 1).unwrap();
            assert!((hotelling_t2(&a, &b, 1).unwrap() - t * t).abs() < 1e-10);
        }
        let a = data(&[&[1.0, 2.0], &[2.0, 1.0], &[0.0, 0.5], &[3.0, 3.0]], 2);
        assert!(hotelling_t2(&a, &a, 0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn hotelling_null_mean() {
        let tp = build_precision(&Graph::new(3, &[(0, 1)]).unwrap(), 2, 0.8, 0.2).unwrap();
        let (n1, n2, k) = (20.0, 20.0, 2.0);
        let reps = 3000;
        let mut sum = 0.0;
        for r in 0..reps {
            let a = sample(&tp, None, 20, 2 * r).unwrap();
            let b = sample(&tp, None, 20, 2 * r + 1).unwrap();
            sum += hotelling_t2(&a, &b, 1).unwrap();
        }
        let want = k * (n1 + n2 - 2.0) / (n1 + n2 - k - 1.0);
        assert!((sum / reps as f64 - want).abs() < 0.15, "{}", sum / reps as f64);
    }

    #[test]
    fn separated_requires_two_types() {
        let tp = build_precision(&Graph::new(3, &[]).unwrap(), 1, 0.8, 0.2).unwrap();
        let d = sample(&tp, None, 20, 1).unwrap();
        assert!(separated_nf_rank(&d, &d, &EstimatorSettings::default()).is_err());
    }

    #[test]
    fn separated_node_rank_rule() {
        let layout = NodeLayout::new(3, 2).unwrap();
        let fs = FilteredSummary::from_mean(
            layout,
            vec![0.9, 0.8, 0.1, 0.7, 0.0, 0.05],
            10,
            SymMatrix::identity(6),
            SymMatrix::identity(6),
        )
        .unwrap();
        let r = SeparatedRanking::from_summary(&fs).unwrap();
        assert_eq!(r.attribute_ranks, vec![1, 2, 4, 3, 6, 5]);
        assert_eq!(r.node_ranks, vec![1, 2, 3]);
        let fs = FilteredSummary::from_mean(
            NodeLayout::new(3, 2).unwrap(),
            vec![0.9, 0.1, 0.8, 0.7, 0.0, 0.95],
            10,
            SymMatrix::identity(6),
            SymMatrix::identity(6),
        )
        .unwrap();
        assert_eq!(SeparatedRanking::from_summary(&fs).unwrap().node_ranks, vec![2, 1, 3]);
    }
}
