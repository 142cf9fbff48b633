use log::warn;
use netfilter_core::estimate::{block_norm, lambda_path, sample_covariance, PenaltyWeights};
use netfilter_core::netmodel::Condition;
use serde::Serialize;

use super::{check_out_of, load_samples, load_square, wrote, Context};
use crate::cli::EstimateArgs;
use crate::error::{CliError, Result};
use crate::io::{self, format_f64, Table};

#[derive(Debug, Serialize)]
struct PathReport {
    n: usize,
    p: usize,
    k: usize,
    gamma: f64,
    weighted: bool,
    lambda_max: f64,
    lambdas: Vec<f64>,
    ebic: Vec<f64>,
    edge_counts: Vec<usize>,
    iterations: Vec<usize>,
    converged: Vec<bool>,
    selected: usize,
    selected_lambda: f64,
}

pub fn estimate(a: &EstimateArgs, ctx: &Context) -> Result<()> {
    let mut inputs = vec![a.control.as_path()];
    inputs.extend(a.weights.as_deref());
    inputs.extend(a.layout.names.as_deref());
    let out = check_out_of(&inputs, &a.out)?;

    let control = load_samples(&a.control, &a.layout, Condition::Control)?;
    let layout = control.data.layout.clone();
    let p = layout.p();
    let weights = match &a.weights {
        Some(path) => {
            let (_, w) = load_square(path, p)?;
            PenaltyWeights::new(w).map_err(|e| CliError::from(e).context(path.display()))?
        }
        None => PenaltyWeights::uniform(p),
    };
    let settings = a.estimator.settings();
    let s = sample_covariance(&control.data)?;
    let path = lambda_path(&s, &layout, &weights, &settings, control.data.n())?;
    let best = path.best_result();
    if !best.converged {
        warn!(
            "selected fit (lambda = {}) stopped after {} iterations without converging",
            best.lambda, best.iterations
        );
    }

    let file = out.join("omega_hat.csv");
    io::write_matrix_csv(&file, &ctx.prov, &control.columns, best.omega_hat.as_matrix())?;
    wrote(&file);

    let report = PathReport {
        n: control.data.n(),
        p,
        k: layout.k(),
        gamma: settings.gamma,
        weighted: a.weights.is_some(),
        lambda_max: path.lambda_max,
        lambdas: path.lambdas.clone(),
        ebic: path.ebic.clone(),
        edge_counts: path.edge_counts(),
        iterations: path.results.iter().map(|r| r.iterations).collect(),
        converged: path.results.iter().map(|r| r.converged).collect(),
        selected: path.best,
        selected_lambda: best.lambda,
    };
    let file = out.join("path.json");
    io::write_json(&file, &ctx.prov, &report)?;
    wrote(&file);

    let mut edges = Table::new(&["node_a", "node_b", "name_a", "name_b", "frobenius"]);
    for &(x, y) in &best.edge_set {
        let f = block_norm(best.omega_hat.as_matrix(), &layout, x, y);
        edges.push(vec![x.to_string(), y.to_string(), control.nodes[x].clone(), control.nodes[y].clone(), format_f64(f)]);
    }
    let file = out.join("edges.tsv");
    io::write_tsv(&file, &ctx.prov, &edges)?;
    wrote(&file);
    Ok(())
}
