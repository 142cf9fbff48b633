use netfilter_core::estimate::block_norm;
use netfilter_core::netmodel::{
    build_precision, perturbation_from_snr, sbm_graph, Condition, GaussianSampler, PerturbationSpec,
};
use netfilter_core::rng::derive_seed;
use serde::Serialize;

use super::{wrote, Context};
use crate::cli::GenerateArgs;
use crate::error::{CliError, Result};
use crate::io::{self, format_f64, Table};

#[derive(Debug, Serialize)]
struct Truth<'a> {
    p: usize,
    k: usize,
    block_sizes: &'a [usize],
    edges: &'a [(usize, usize)],
    diagonal_lift: f64,
    perturbation: &'a PerturbationSpec,
    seed: u64,
    graph_seed: u64,
    control_seed: u64,
    case_seed: u64,
}

pub fn generate(a: &GenerateArgs, ctx: &Context) -> Result<()> {
    let blocks = if a.blocks.is_empty() { vec![a.p - a.p / 2, a.p / 2] } else { a.blocks.clone() };
    if blocks.iter().sum::<usize>() != a.p {
        return Err(CliError::config("--blocks must sum to --p"));
    }
    let snr = match a.snr.len() {
        1 => vec![a.snr[0]; a.perturb.len()],
        m if m == a.perturb.len() => a.snr.clone(),
        m => return Err(CliError::config(format!("--snr has {m} values for {} perturbed nodes", a.perturb.len()))),
    };
    let out = io::prepare_output_dir(&a.out)?;
    let (graph_seed, control_seed, case_seed) =
        (derive_seed(a.seed, &[0]), derive_seed(a.seed, &[1]), derive_seed(a.seed, &[2]));
    let graph = sbm_graph(a.p, &blocks, a.theta_within, a.theta_across, graph_seed)?;
    let tp = build_precision(&graph, a.k, a.rho_in, a.rho_out)?;
    let mu = if a.perturb.is_empty() {
        PerturbationSpec::zero(tp.layout.dim())
    } else {
        perturbation_from_snr(&tp, &a.perturb, &snr)?
    };
    let sampler = GaussianSampler::from_precision(&tp)?;
    let control = sampler.sample(None, a.n, control_seed, Condition::Control)?;
    let case = sampler.sample(Some(&mu), a.n_case.unwrap_or(a.n), case_seed, Condition::Case)?;

    let nodes: Vec<String> = (0..a.p).map(|i| format!("node{i}")).collect();
    let columns = io::column_names(&nodes, a.k);
    for (name, m) in [("control.csv", control.samples()), ("case.csv", case.samples()), ("omega.csv", tp.omega.as_matrix())] {
        let path = out.join(name);
        io::write_matrix_csv(&path, &ctx.prov, &columns, m)?;
        wrote(&path);
    }
    let mut edges = Table::new(&["node_a", "node_b", "name_a", "name_b", "frobenius"]);
    for &(x, y) in graph.edges() {
        let f = block_norm(tp.omega.as_matrix(), &tp.layout, x, y);
        edges.push(vec![x.to_string(), y.to_string(), nodes[x].clone(), nodes[y].clone(), format_f64(f)]);
    }
    let path = out.join("true_edges.tsv");
    io::write_tsv(&path, &ctx.prov, &edges)?;
    wrote(&path);
    let truth = Truth {
        p: a.p,
        k: a.k,
        block_sizes: &blocks,
        edges: graph.edges(),
        diagonal_lift: tp.diagonal_lift,
        perturbation: &mu,
        seed: a.seed,
        graph_seed,
        control_seed,
        case_seed,
    };
    let path = out.join("truth.json");
    io::write_json(&path, &ctx.prov, &truth)?;
    wrote(&path);
    Ok(())
}
