mod accuracy;
mod cv;
mod estimate;
mod generate;
mod rank;
mod sequential;
mod simulate;

use std::path::Path;

use log::info;
use netfilter_core::linalg::SymMatrix;
use netfilter_core::netmodel::{Condition, Dataset};

use crate::cli::{Cli, Command, LayoutArgs};
use crate::error::{CliError, Result};
use crate::io::{self, Provenance};

pub use accuracy::accuracy;
pub use cv::cv;
pub use estimate::estimate;
pub use generate::generate;
pub use rank::rank;
pub use sequential::sequential;
pub use simulate::simulate;

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Context {
    pub prov: Provenance,
    pub threads: Option<usize>,
    pub timing: bool,
}

pub fn run(cli: &Cli, prov: Provenance) -> Result<()> {
    let ctx = Context { prov, threads: cli.threads, timing: cli.timing };
    match &cli.command {
        Command::Simulate(a) => simulate(a, &ctx),
        Command::Generate(a) => generate(a, &ctx),
        Command::Estimate(a) => estimate(a, &ctx),
        Command::Rank(a) => rank(a, &ctx),
        Command::Sequential(a) => sequential(a, &ctx),
        Command::Cv(a) => cv(a, &ctx),
        Command::Accuracy(a) => accuracy(a, &ctx),
    }
}

fn wrote(path: &Path) {
    info!("wrote {}", path.display());
}

/// Samples plus node names taken from `--names` or the column header.
struct Loaded {
    data: Dataset,
    columns: Vec<String>,
    nodes: Vec<String>,
}

fn load_samples(path: &Path, layout: &LayoutArgs, condition: Condition) -> Result<Loaded> {
    let (data, columns) = io::read_dataset(path, layout.k, layout.p, condition)?;
    let names = layout.names.as_deref().map(io::read_names).transpose()?;
    let nodes = io::node_names(&columns, layout.k, names)?;
    Ok(Loaded { data, columns, nodes })
}

fn load_square(path: &Path, dim: usize) -> Result<(Vec<String>, SymMatrix)> {
    let m = io::read_matrix_csv(path)?;
    if m.matrix.rows() != m.matrix.cols() {
        return Err(CliError::config(format!(
            "{}: expected a square matrix, found {} × {}",
            path.display(),
            m.matrix.rows(),
            m.matrix.cols()
        )));
    }
    if m.matrix.cols() != dim {
        return Err(CliError::config(format!("{}: expected dimension {dim}, found {}", path.display(), m.matrix.cols())));
    }
    let tol = 1e-8 * m.matrix.max_abs().max(1.0);
    let asym = (0..dim)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .any(|(i, j)| (m.matrix[(i, j)] - m.matrix[(j, i)]).abs() > tol);
    if asym {
        return Err(CliError::config(format!("{}: matrix is not symmetric", path.display())));
    }
    let sym = SymMatrix::from_matrix(m.matrix).map_err(|e| CliError::from(e).context(path.display()))?;
    Ok((m.names, sym))
}

fn check_out_of(inputs: &[&Path], out: &Path) -> Result<std::path::PathBuf> {
    io::check_inputs(inputs.iter().copied())?;
    io::prepare_output_dir(out)
}
