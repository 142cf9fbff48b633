use netfilter_core::accuracy::{discrepancy_moments, sample_discrepancy, spectral_norm_bound, NormRatios};
use netfilter_core::linalg::{Matrix, SymMatrix};
use netfilter_core::netmodel::PerturbationSpec;
use netfilter_core::rng::derive_seed;
use netfilter_core::NodeLayout;
use serde::Serialize;

use super::{check_out_of, load_square, wrote, Context};
use crate::cli::AccuracyArgs;
use crate::error::{CliError, Result};
use crate::io::{self, format_f64, Table};

#[derive(Debug, Serialize)]
struct Empirical {
    reps: usize,
    seed: u64,
    mean: f64,
    variance: f64,
    mean_se: f64,
}

#[derive(Debug, Serialize)]
struct NodeAccuracy {
    node: usize,
    name: String,
    d_matrix: Matrix,
    eigenvalues: Vec<f64>,
    multiplicities: Vec<usize>,
    noncentralities: Vec<f64>,
    mean: f64,
    variance: f64,
    mixture_mean: f64,
    mixture_variance: f64,
    norms: NormRatios,
    empirical: Option<Empirical>,
}

#[derive(Debug, Serialize)]
struct AccuracyReport {
    n: usize,
    p: usize,
    k: usize,
    nodes: Vec<NodeAccuracy>,
}

fn read_mu(path: &std::path::Path, layout: &NodeLayout) -> Result<PerturbationSpec> {
    let m = io::read_matrix_csv(path)?;
    if m.matrix.rows() != 1 {
        return Err(CliError::config(format!("{}: expected one row of mean shifts", path.display())));
    }
    PerturbationSpec::from_mu(layout, m.matrix.row(0).to_vec()).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn accuracy(a: &AccuracyArgs, ctx: &Context) -> Result<()> {
    let mut inputs = vec![a.omega.as_path(), a.omega_tilde.as_path()];
    inputs.extend(a.mu.as_deref());
    inputs.extend(a.layout.names.as_deref());
    let out = check_out_of(&inputs, &a.out)?;
    let k = a.layout.k;
    if k == 0 {
        return Err(CliError::config("--k must be positive"));
    }
    let dim = io::read_matrix_csv(&a.omega)?.matrix.cols();
    if dim % k != 0 || a.layout.p.is_some_and(|p| p * k != dim) {
        return Err(CliError::config(format!("{}: dimension {dim} does not fit the layout", a.omega.display())));
    }
    let (columns, omega): (Vec<String>, SymMatrix) = load_square(&a.omega, dim)?;
    let (_, omega_tilde) = load_square(&a.omega_tilde, dim)?;
    let layout = NodeLayout::new(dim / k, k)?;
    let names = a.layout.names.as_deref().map(io::read_names).transpose()?;
    let nodes_names = io::node_names(&columns, k, names)?;
    let mu = a.mu.as_deref().map(|p| read_mu(p, &layout)).transpose()?;
    let nodes: Vec<usize> = if a.node.is_empty() { (0..layout.p()).collect() } else { a.node.clone() };
    if a.reps == 1 {
        return Err(CliError::config("--reps must be 0 or at least 2"));
    }

    let mut report = AccuracyReport { n: a.n, p: layout.p(), k, nodes: Vec::new() };
    for &node in &nodes {
        if node >= layout.p() {
            return Err(CliError::config(format!("--node {node} is out of range for {} nodes", layout.p())));
        }
        let r = discrepancy_moments(&omega, &omega_tilde, node, &layout, mu.as_ref(), a.n)?;
        let norms = spectral_norm_bound(&omega, &omega_tilde, node, &layout, mu.as_ref(), a.n)?;
        let empirical = if a.reps > 0 {
            let seed = derive_seed(a.seed, &[node as u64]);
            let draws = sample_discrepancy(&omega, &omega_tilde, node, &layout, mu.as_ref(), a.n, a.reps, seed)?;
            let m = draws.len() as f64;
            let mean = draws.iter().sum::<f64>() / m;
            let variance = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
            Some(Empirical { reps: a.reps, seed, mean, variance, mean_se: (variance / m).sqrt() })
        } else {
            None
        };
        report.nodes.push(NodeAccuracy {
            node,
            name: nodes_names[node].clone(),
            d_matrix: r.d_matrix.into_matrix(),
            eigenvalues: r.eigenvalues,
            multiplicities: r.multiplicities,
            noncentralities: r.noncentralities,
            mean: r.mean,
            variance: r.variance,
            mixture_mean: r.mixture_mean,
            mixture_variance: r.mixture_variance,
            norms,
            empirical,
        });
    }

    let mut table = Table::new(&[
        "node", "name", "mean", "variance", "delta_norm", "mean_ratio", "variance_ratio", "empirical_mean", "empirical_variance",
    ]);
    for r in &report.nodes {
        let (em, ev) = match &r.empirical {
            Some(e) => (format_f64(e.mean), format_f64(e.variance)),
            None => ("NA".into(), "NA".into()),
        };
        table.push(vec![
            r.node.to_string(),
            r.name.clone(),
            format_f64(r.mean),
            format_f64(r.variance),
            format_f64(r.norms.delta_norm),
            format_f64(r.norms.mean_ratio),
            format_f64(r.norms.variance_ratio),
            em,
            ev,
        ]);
    }
    let file = out.join("accuracy.tsv");
    io::write_tsv(&file, &ctx.prov, &table)?;
    wrote(&file);
    let file = out.join("accuracy.json");
    io::write_json(&file, &ctx.prov, &report)?;
    wrote(&file);
    Ok(())
}
