//! Tabular output files and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Structured,
}

/// A table cell. Non-finite floats are written as empty CSV fields and JSON
/// nulls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    Missing,
}

impl Cell {
    fn csv_field(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) if v.is_finite() => v.to_string(),
            Cell::Num(_) | Cell::Missing => String::new(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn normalized(&self) -> Cell {
        match self {
            Cell::Num(v) if !v.is_finite() => Cell::Missing,
            c => c.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    /// File stem.
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width for table {}",
            self.name
        );
        self.rows.push(row);
    }

    /// Column by name as floats; non-numeric cells become NaN.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match r[j] {
                    Cell::Num(v) => v,
                    Cell::Int(v) => v as f64,
                    _ => f64::NAN,
                })
                .collect(),
        )
    }
}

/// Everything in the manifest except wall time and worker count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCore {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub config: BTreeMap<String, String>,
    pub base_seed: u64,
    pub seed_derivation: String,
    pub outputs: Vec<String>,
    /// Summary scalars of the run (fit exponents, convergence data).
    pub summary: BTreeMap<String, Cell>,
}

impl ManifestCore {
    pub fn new(cfg: &RunConfig, outputs: Vec<String>, summary: BTreeMap<String, Cell>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            experiment: cfg.experiment.name().into(),
            config: cfg
                .entries()
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
            base_seed: cfg.seed(),
            seed_derivation: "realization k uses splitmix64(splitmix64(base_seed) ^ k)".into(),
            outputs,
            summary: summary
                .into_iter()
                .map(|(k, v)| (k, v.normalized()))
                .collect(),
        }
    }

    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("manifest serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// `manifest.json#sha256:<hash>`, embedded in every output file.
    pub fn reference(&self) -> String {
        format!("{MANIFEST_FILE}#sha256:{}", self.sha256())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(flatten)]
    pub core: ManifestCore,
    pub sha256: String,
    pub threads: usize,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredFile {
    pub manifest_ref: String,
    pub manifest: ManifestCore,
    pub table: Table,
}

pub fn file_name(table: &Table, format: Format) -> String {
    match format {
        Format::Csv => format!("{}.csv", table.name),
        Format::Structured => format!("{}.json", table.name),
    }
}

fn write_csv(path: &Path, table: &Table, reference: &str) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(path)?;
    let mut header: Vec<&str> = table.columns.iter().map(String::as_str).collect();
    header.push("manifest_ref");
    w.write_record(&header)?;
    for row in &table.rows {
        let mut fields: Vec<String> = row.iter().map(Cell::csv_field).collect();
        fields.push(reference.to_string());
        w.write_record(&fields)?;
    }
    w.flush()
}

/// Reads a CSV written by [`emit`] back into a table, dropping the
/// `manifest_ref` column. Cells that parse as integers or floats are numeric.
pub fn read_csv(path: &Path, name: &str) -> io::Result<(Table, Option<String>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let keep = header.len().saturating_sub(1);
    let mut table = Table {
        name: name.into(),
        columns: header[..keep].to_vec(),
        rows: Vec::new(),
    };
    let mut reference = None;
    for rec in r.records() {
        let rec = rec?;
        reference = rec.get(keep).map(String::from);
        table.rows.push(
            rec.iter()
                .take(keep)
                .map(|f| {
                    if f.is_empty() {
                        Cell::Missing
                    } else if let Ok(i) = f.parse::<i64>() {
                        Cell::Int(i)
                    } else if let Ok(x) = f.parse::<f64>() {
                        Cell::Num(x)
                    } else {
                        Cell::Text(f.into())
                    }
                })
                .collect(),
        );
    }
    Ok((table, reference))
}

pub fn read_structured(path: &Path) -> io::Result<StructuredFile> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(io::Error::other)
}

/// Writes every table and `manifest.json` into `out`; returns the paths.
pub fn emit(
    out: &Path,
    format: Format,
    tables: &[Table],
    core: &ManifestCore,
    threads: usize,
    wall_time_seconds: f64,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let reference = core.reference();
    let mut written = Vec::new();
    for table in tables {
        let path = out.join(file_name(table, format));
        match format {
            Format::Csv => write_csv(&path, table, &reference)?,
            Format::Structured => {
                let mut t = table.clone();
                for row in &mut t.rows {
                    for c in row.iter_mut() {
                        *c = c.normalized();
                    }
                }
                let file = StructuredFile {
                    manifest_ref: reference.clone(),
                    manifest: core.clone(),
                    table: t,
                };
                let mut bytes = serde_json::to_vec_pretty(&file).map_err(io::Error::other)?;
                bytes.push(b'\n');
                fs::write(&path, bytes)?;
            }
        }
        written.push(path);
    }
    let manifest = Manifest {
        core: core.clone(),
        sha256: core.sha256(),
        threads,
        wall_time_seconds,
    };
    let path = out.join(MANIFEST_FILE);
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(io::Error::other)?;
    bytes.push(b'\n');
    fs::write(&path, bytes)?;
    written.push(path);
    Ok(written)
}
