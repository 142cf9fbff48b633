//! File formats.
//!
//! * Matrices are CSV: a header row of column names, then numeric rows. Sample
//!   matrices are `n × pK` in node-major order; `Ω`, `Σ` and penalty weights
//!   are square.
//! * Rankings and other flat tables are TSV without quoting.
//! * Reports are JSON with keys in sorted order.
//!
//! Every file written starts with a provenance line (`# netfilter <version>
//! <invocation>`); JSON files carry it under the `generator` key instead.
//! Readers skip lines starting with `#`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use netfilter_core::netmodel::{Condition, Dataset};
use netfilter_core::{Matrix, NodeLayout};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub version: String,
    pub invocation: String,
}

impl Provenance {
    pub fn new(args: impl IntoIterator<Item = impl AsRef<str>>) -> Self {
        let invocation = args.into_iter().map(|a| a.as_ref().to_string()).collect::<Vec<_>>().join(" ");
        Provenance { version: VERSION.to_string(), invocation }
    }

    pub fn comment(&self) -> String {
        format!("# netfilter {} {}", self.version, self.invocation.replace(['\n', '\r'], " "))
    }

    fn json(&self) -> Value {
        json!({ "tool": "netfilter", "version": self.version, "invocation": self.invocation })
    }
}

/// Shortest round-trip text for `x`, switching to exponent form for very large
/// or small magnitudes.
pub fn format_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedMatrix {
    pub names: Vec<String>,
    pub matrix: Matrix,
}

pub fn read_matrix_csv(path: &Path) -> Result<NamedMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::read(path, e))?;
    let names: Vec<String> = reader.headers().map_err(|e| CliError::read(path, e))?.iter().map(String::from).collect();
    if names.is_empty() || names.iter().all(|n| n.is_empty()) {
        return Err(CliError::config(format!("{}: missing header row", path.display())));
    }
    let cols = names.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| CliError::read(path, e))?;
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::config(format!(
                    "{}: row {}, column {}: '{field}' is not a number (missing values are not allowed)",
                    path.display(),
                    rows + 1,
                    names[j]
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::config(format!("{}: row {}: non-finite value", path.display(), rows + 1)));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::config(format!("{}: no data rows", path.display())));
    }
    let matrix = Matrix::from_vec(rows, cols, data)?;
    Ok(NamedMatrix { names, matrix })
}

pub fn write_matrix_csv(path: &Path, prov: &Provenance, names: &[String], m: &Matrix) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{}", prov.comment()).map_err(|e| CliError::write(path, e))?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(names).map_err(|e| CliError::write(path, e))?;
        for i in 0..m.rows() {
            w.write_record(m.row(i).iter().map(|&x| format_f64(x))).map_err(|e| CliError::write(path, e))?;
        }
        w.flush().map_err(|e| CliError::write(path, e))?;
    }
    out.flush().map_err(|e| CliError::write(path, e))
}

/// One name per line; blank lines and `#` comments are skipped.
pub fn read_names(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

/// A flat table written as TSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

pub fn write_tsv(path: &Path, prov: &Provenance, table: &Table) -> Result<()> {
    let bad = |f: &String| f.contains(['\t', '\n', '\r']);
    if table.header.iter().chain(table.rows.iter().flatten()).any(bad) {
        return Err(CliError::config(format!(
            "{}: a field contains a tab or line break and cannot be written as TSV",
            path.display()
        )));
    }
    let mut text = prov.comment();
    text.push('\n');
    for row in std::iter::once(&table.header).chain(&table.rows) {
        text.push_str(&row.join("\t"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::write(path, e))
}

/// Pretty JSON with sorted keys and a `generator` entry.
pub fn to_json(prov: &Provenance, value: &impl Serialize) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| CliError::runtime(format!("cannot encode report: {e}")))?;
    match &mut v {
        Value::Object(map) => {
            map.insert("generator".into(), prov.json());
        }
        other => {
            let inner = other.take();
            v = json!({ "generator": prov.json(), "value": inner });
        }
    }
    let mut text = serde_json::to_string_pretty(&v).map_err(|e| CliError::runtime(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn write_json(path: &Path, prov: &Provenance, value: &impl Serialize) -> Result<()> {
    fs::write(path, to_json(prov, value)?).map_err(|e| CliError::write(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::write(path, e))
}

/// Checks that every input is a readable file.
pub fn check_inputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        File::open(p).map_err(|e| CliError::read(p, e))?;
        if !p.is_file() {
            return Err(CliError::read(p, "not a regular file"));
        }
    }
    Ok(())
}

/// Creates the output directory and checks that it is writable.
pub fn prepare_output_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
    let probe = dir.join(".netfilter-write-check");
    fs::write(&probe, b"").map_err(|e| CliError::config(format!("output directory {} is not writable: {e}", dir.display())))?;
    let _ = fs::remove_file(&probe);
    Ok(dir.to_path_buf())
}

/// Node names for a layout: from `names` when given, otherwise from the shared
/// prefix of each node's column names.
pub fn node_names(columns: &[String], k: usize, names: Option<Vec<String>>) -> Result<Vec<String>> {
    let p = columns.len() / k;
    if let Some(names) = names {
        if names.len() != p {
            return Err(CliError::config(format!("names file lists {} names for {p} nodes", names.len())));
        }
        return Ok(names);
    }
    Ok(columns.chunks(k).map(|c| shared_prefix(c)).collect())
}

fn shared_prefix(cols: &[String]) -> String {
    if cols.len() == 1 {
        return cols[0].clone();
    }
    let first = &cols[0];
    let mut len = first.len();
    for c in &cols[1..] {
        len = first.bytes().zip(c.bytes()).take(len).take_while(|(a, b)| a == b).count();
    }
    while !first.is_char_boundary(len) {
        len -= 1;
    }
    let prefix = first[..len].trim_end_matches(['_', '.', ':', '-', ' ']);
    if prefix.is_empty() {
        first.clone()
    } else {
        prefix.to_string()
    }
}

/// Column names `<node>_<attribute>` for generated data.
pub fn column_names(nodes: &[String], k: usize) -> Vec<String> {
    nodes.iter().flat_map(|n| (1..=k).map(move |a| format!("{n}_{a}"))).collect()
}

/// Reads an `n × pK` sample matrix. `p` is inferred from the column count
/// when not given.
pub fn read_dataset(path: &Path, k: usize, p: Option<usize>, condition: Condition) -> Result<(Dataset, Vec<String>)> {
    if k == 0 {
        return Err(CliError::config("--k must be positive"));
    }
    let NamedMatrix { names, matrix } = read_matrix_csv(path)?;
    let cols = matrix.cols();
    if cols % k != 0 {
        return Err(CliError::config(format!("{}: {cols} columns is not a multiple of k = {k}", path.display())));
    }
    if let Some(p) = p {
        if p * k != cols {
            return Err(CliError::config(format!("{}: expected p·k = {} columns, found {cols}", path.display(), p * k)));
        }
    }
    let layout = NodeLayout::new(cols / k, k)?;
    let d = Dataset::new(layout, matrix, condition).map_err(|e| CliError::from(e).context(path.display()))?;
    Ok((d, names))
}
