use std::path::Path;

use log::warn;
use netfilter_core::filtertest::{filter, rank_nodes, FilteredSummary, LrtResult};
use netfilter_core::netmodel::Condition;
use serde::Serialize;

use super::{check_out_of, load_samples, load_square, wrote, Context, Loaded};
use crate::cli::{LayoutArgs, RankArgs};
use crate::error::Result;
use crate::io::{self, format_f64, Table};

#[derive(Debug, Serialize)]
struct RankedNode<'a> {
    name: &'a str,
    #[serde(flatten)]
    result: &'a LrtResult,
}

#[derive(Debug, Serialize)]
struct RankingReport<'a> {
    n_case: usize,
    p: usize,
    k: usize,
    nodes: Vec<RankedNode<'a>>,
}

/// Case data filtered through the precision matrix stored at `omega_path`.
pub(super) fn filtered_case(case_path: &Path, omega_path: &Path, layout: &LayoutArgs) -> Result<(Loaded, FilteredSummary)> {
    let loaded = load_samples(case_path, layout, Condition::Case)?;
    let (omega_names, omega) = load_square(omega_path, loaded.data.dim())?;
    if omega_names != loaded.columns {
        warn!("column names of {} differ from those of {}", omega_path.display(), case_path.display());
    }
    let fs = filter(&loaded.data, &omega)?;
    Ok((loaded, fs))
}

pub fn rank(a: &RankArgs, ctx: &Context) -> Result<()> {
    let mut inputs = vec![a.case.as_path(), a.omega.as_path()];
    inputs.extend(a.layout.names.as_deref());
    let out = check_out_of(&inputs, &a.out)?;
    let (case, fs) = filtered_case(&a.case, &a.omega, &a.layout)?;
    let results = rank_nodes(&fs)?;
    let k = fs.layout.k();

    let mut header = vec!["rank", "node", "name", "T", "df", "p_raw", "p_adj"].into_iter().map(String::from).collect::<Vec<_>>();
    header.extend((1..=k).map(|j| format!("mu_hat_{j}")));
    let mut table = Table { header, rows: Vec::new() };
    for r in &results {
        let node = r.node.unwrap_or_default();
        let mut row = vec![
            r.rank.to_string(),
            node.to_string(),
            case.nodes[node].clone(),
            format_f64(r.statistic),
            r.df.to_string(),
            format_f64(r.p_raw),
            format_f64(r.p_adjusted),
        ];
        row.extend(r.mu_hat.iter().map(|&m| format_f64(m)));
        table.push(row);
    }
    let file = out.join("ranking.tsv");
    io::write_tsv(&file, &ctx.prov, &table)?;
    wrote(&file);

    let report = RankingReport {
        n_case: fs.n_case,
        p: fs.layout.p(),
        k,
        nodes: results
            .iter()
            .map(|r| RankedNode { name: &case.nodes[r.node.unwrap_or_default()], result: r })
            .collect(),
    };
    let file = out.join("ranking.json");
    io::write_json(&file, &ctx.prov, &report)?;
    wrote(&file);
    Ok(())
}
