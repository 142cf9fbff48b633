use log::warn;
use netfilter_core::seqtest::{sequential_rank, Adjustment, SequentialTrace};
use serde::Serialize;

use super::rank::filtered_case;
use super::{check_out_of, wrote, Context};
use crate::cli::SequentialArgs;
use crate::error::Result;
use crate::io::{self, format_f64, Table};

#[derive(Debug, Serialize)]
struct SequentialReport<'a> {
    n_case: usize,
    p: usize,
    k: usize,
    max_steps: usize,
    alpha: Option<f64>,
    selected: Vec<usize>,
    selected_names: Vec<&'a str>,
    trace: &'a SequentialTrace,
}

pub fn sequential(a: &SequentialArgs, ctx: &Context) -> Result<()> {
    let mut inputs = vec![a.case.as_path(), a.omega.as_path()];
    inputs.extend(a.layout.names.as_deref());
    let out = check_out_of(&inputs, &a.out)?;
    let (case, fs) = filtered_case(&a.case, &a.omega, &a.layout)?;
    let adjustment = if a.pooled { Adjustment::Pooled } else { Adjustment::WithinStep };
    let trace = sequential_rank(&fs, a.max_steps, a.alpha, adjustment)?;
    if trace.weak_first_selection {
        warn!("the first selection barely beats the runner-up; later steps condition on it and may mislead if it is a false positive");
    }

    let mut table = Table::new(&["step", "node", "name", "T", "p_raw", "p_adj"]);
    for step in &trace.steps {
        let Some(node) = step.selected else { continue };
        let Some(i) = step.candidates.iter().position(|&c| c == node) else { continue };
        table.push(vec![
            step.step.to_string(),
            node.to_string(),
            case.nodes[node].clone(),
            format_f64(step.statistics[i].max(0.0)),
            format_f64(step.p_raw[i]),
            format_f64(step.p_adjusted[i]),
        ]);
    }
    let file = out.join("sequential.tsv");
    io::write_tsv(&file, &ctx.prov, &table)?;
    wrote(&file);

    let selected = trace.selected();
    let report = SequentialReport {
        n_case: fs.n_case,
        p: fs.layout.p(),
        k: fs.layout.k(),
        max_steps: a.max_steps,
        alpha: a.alpha,
        selected_names: selected.iter().map(|&j| case.nodes[j].as_str()).collect(),
        selected,
        trace: &trace,
    };
    let file = out.join("sequential.json");
    io::write_json(&file, &ctx.prov, &report)?;
    wrote(&file);
    Ok(())
}
