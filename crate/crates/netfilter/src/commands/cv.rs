use log::warn;
use netfilter_core::evaluate::{cv_mse_rank, CvResult};
use netfilter_core::netmodel::Condition;
use serde::Serialize;

use super::{check_out_of, load_samples, wrote, Context};
use crate::cli::CvArgs;
use crate::error::{CliError, Result};
use crate::io::{self, format_f64, Table};

#[derive(Debug, Serialize)]
struct CvReport<'a> {
    seed: u64,
    names: &'a [String],
    #[serde(flatten)]
    result: &'a CvResult,
}

pub fn cv(a: &CvArgs, ctx: &Context) -> Result<()> {
    let mut inputs = vec![a.case.as_path(), a.control.as_path()];
    inputs.extend(a.layout.names.as_deref());
    let out = check_out_of(&inputs, &a.out)?;
    let case = load_samples(&a.case, &a.layout, Condition::Case)?;
    let control = load_samples(&a.control, &a.layout, Condition::Control)?;
    if case.data.dim() != control.data.dim() {
        return Err(CliError::config(format!(
            "case data has {} columns but control data has {}",
            case.data.dim(),
            control.data.dim()
        )));
    }
    let result = cv_mse_rank(&case.data, &control.data, a.folds, &a.estimator.settings(), a.seed)?;
    if result.unconverged_folds > 0 {
        warn!("{} of {} folds used a network estimate that did not converge", result.unconverged_folds, a.folds);
    }

    let mut table = Table::new(&["rank", "node", "name", "mse", "null_mse"]);
    for (pos, &node) in result.ranking.iter().enumerate() {
        table.push(vec![
            (pos + 1).to_string(),
            node.to_string(),
            case.nodes[node].clone(),
            format_f64(result.mse[node]),
            format_f64(result.null_mse),
        ]);
    }
    let file = out.join("cv.tsv");
    io::write_tsv(&file, &ctx.prov, &table)?;
    wrote(&file);
    let file = out.join("cv.json");
    io::write_json(&file, &ctx.prov, &CvReport { seed: a.seed, names: &case.nodes, result: &result })?;
    wrote(&file);
    Ok(())
}
