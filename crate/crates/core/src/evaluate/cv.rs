use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{estimate_precision, EstimatorSettings, PenaltyWeights};
use crate::filtertest::{filter, mu_mle};
use crate::linalg::SymMatrix;
use crate::netmodel::Dataset;
use crate::rng::{derive_seed, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: usize,
    /// Mean test MSE per node, averaged over folds.
    pub mse: Vec<f64>,
    /// MSE of the zero-mean prediction, averaged over folds.
    pub null_mse: f64,
    /// Nodes by increasing MSE (ties by node index).
    pub ranking: Vec<usize>,
    /// Folds whose network estimate did not converge (still used).
    pub unconverged_folds: usize,
}

/// Mean squared error of `test` rows against the mean `Σ·mu`, averaged over
/// samples and coordinates.
pub fn prediction_mse(test: &Dataset, sigma: &SymMatrix, mu: &[f64]) -> Result<f64> {
    let pred = sigma.matvec(mu)?;
    let mut acc = 0.0;
    for i in 0..test.n() {
        for (y, m) in test.samples().row(i).iter().zip(&pred) {
            acc += (y - m) * (y - m);
        }
    }
    Ok(acc / (test.n() * test.dim()) as f64)
}

/// Fold label of each row after a seeded shuffle.
fn fold_labels(n: usize, folds: usize, rng: &mut Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut labels = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = pos % folds;
    }
    labels
}

fn split(d: &Dataset, labels: &[usize], fold: usize) -> Result<(Dataset, Dataset)> {
    let train: Vec<usize> = (0..d.n()).filter(|&i| labels[i] != fold).collect();
    let test: Vec<usize> = (0..d.n()).filter(|&i| labels[i] == fold).collect();
    let test = if test.len() == 1 {
        // A single row is allowed for testing; duplicate it to satisfy the dataset invariant.
        d.select_rows(&[test[0], test[0]])?
    } else {
        d.select_rows(&test)?
    };
    Ok((d.select_rows(&train)?, test))
}

/// K-fold cross-validation of single-node mean-shift models. Per fold the
/// network is estimated on training controls, `μ̂_j` on training cases, and
/// the test-case mean is predicted as `Σ̂ (0, …, μ̂_j, …, 0)`.
pub fn cv_mse_rank(
    case: &Dataset,
    control: &Dataset,
    folds: usize,
    settings: &EstimatorSettings,
    seed: u64,
) -> Result<CvResult> {
    if folds < 2 {
        return Err(Error::InvalidConfig("at least two folds are required"));
    }
    if case.layout.p() != control.layout.p() || case.layout.k() != control.layout.k() {
        return Err(Error::DimensionMismatch { expected: control.dim(), found: case.dim() });
    }
    for d in [case, control] {
        if d.n() < 2 * folds {
            return Err(Error::TooFewSamples { needed: 2 * folds, found: d.n() });
        }
    }
    let layout = &case.layout;
    let p = layout.p();
    let case_labels = fold_labels(case.n(), folds, &mut Rng::new(derive_seed(seed, &[0])));
    let control_labels = fold_labels(control.n(), folds, &mut Rng::new(derive_seed(seed, &[1])));
    let weights = PenaltyWeights::uniform(p);

    let mut mse = vec![0.0; p];
    let mut null_mse = 0.0;
    let mut unconverged_folds = 0;
    for f in 0..folds {
        let (train_case, test_case) = split(case, &case_labels, f)?;
        let (train_control, _) = split(control, &control_labels, f)?;
        let fit = estimate_precision(&train_control, &weights, settings)?.into_best();
        if !fit.converged {
            unconverged_folds += 1;
        }
        let fs = filter(&train_case, &fit.omega_hat)?;
        null_mse += prediction_mse(&test_case, &fs.sigma, &vec![0.0; layout.dim()])?;
        for (node, acc) in mse.iter_mut().enumerate() {
            let group: Vec<usize> = layout.node_range(node).collect();
            let est = mu_mle(&fs, &group)?;
            let mut mu = vec![0.0; layout.dim()];
            for (&g, v) in group.iter().zip(est) {
                mu[g] = v;
            }
            *acc += prediction_mse(&test_case, &fs.sigma, &mu)?;
        }
    }
    let scale = 1.0 / folds as f64;
    mse.iter_mut().for_each(|m| *m *= scale);
    let mut ranking: Vec<usize> = (0..p).collect();
    ranking.sort_by(|&a, &b| mse[a].total_cmp(&mse[b]).then(a.cmp(&b)));
    Ok(CvResult { folds, mse, null_mse: null_mse * scale, ranking, unconverged_folds })
}
