use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(k/p, fraction of replicates with rank ≤ k)` for `k = 0..=p`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Empirical CDF of the true-site ranks on the grid `k/p`, with trapezoid AUC.
pub fn roc_and_auc(ranks: &[usize], p: usize) -> Result<RocCurve> {
    if p == 0 {
        return Err(Error::InvalidConfig("p must be positive"));
    }
    if let Some(&bad) = ranks.iter().find(|&&r| r == 0 || r > p) {
        return Err(Error::IndexOutOfRange { index: bad, dim: p });
    }
    let total = ranks.len().max(1) as f64;
    let mut counts = alloc::vec![0usize; p + 1];
    for &r in ranks {
        counts[r] += 1;
    }
    let mut points = Vec::with_capacity(p + 1);
    let mut cumulative = 0;
    for (k, c) in counts.iter().enumerate() {
        cumulative += c;
        points.push((k as f64 / p as f64, cumulative as f64 / total));
    }
    let auc = points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum();
    Ok(RocCurve { points, auc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn perfect_ranks() {
        let c = roc_and_auc(&[1; 10], 20).unwrap();
        assert!((c.auc - (1.0 - 1.0 / 40.0)).abs() < 1e-12);
        assert_eq!(c.points[0], (0.0, 0.0));
        assert_eq!(*c.points.last().unwrap(), (1.0, 1.0));
    }

    #[test]
    fn uniform_ranks_near_half() {
        let mut rng = Rng::new(2);
        let ranks: Vec<usize> = (0..20000).map(|_| 1 + rng.below(20)).collect();
        let c = roc_and_auc(&ranks, 20).unwrap();
        assert!((c.auc - 0.5).abs() < 0.01);
        assert!(c.points.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(roc_and_auc(&[0], 3).is_err());
        assert!(roc_and_auc(&[4], 3).is_err());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn auc_is_bounded_and_matches_mean_rank(p in 1usize..30, raw in prop::collection::vec(0usize..1000, 1..50)) {
            let ranks: Vec<usize> = raw.iter().map(|r| 1 + r % p).collect();
            let c = roc_and_auc(&ranks, p).unwrap();
            prop_assert!((0.0..=1.0).contains(&c.auc));
            prop_assert!(c.points.windows(2).all(|w| w[1].1 >= w[0].1));
            // Trapezoid area under the rank CDF: 1 − (mean rank − ½)/p.
            let mean = ranks.iter().sum::<usize>() as f64 / ranks.len() as f64;
            prop_assert!((c.auc - (1.0 - (mean - 0.5) / p as f64)).abs() < 1e-12);
        }
    }
}
