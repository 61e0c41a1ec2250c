//! Report assembly and output files.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Table as CSV next to a JSON summary.
    Csv,
    /// Everything in one JSON document.
    Json,
}

/// Plot data: named columns of numbers.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// What a command produced. Non-empty `failures` means a tolerance check
/// failed.
pub struct Outcome {
    pub config: Value,
    pub results: Value,
    pub table: Table,
    pub failures: Vec<String>,
}

#[derive(Serialize)]
struct Document<'a> {
    command: &'a str,
    status: &'static str,
    failures: &'a [String],
    config: &'a Value,
    results: &'a Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    table: Option<&'a Table>,
}

/// Shortest round-trip text: plain for integers and moderate magnitudes,
/// exponent form otherwise.
fn cell(v: f64) -> String {
    let a = v.abs();
    if v == v.trunc() && a < 1e15 || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

/// Writes `<command>.json` and, for CSV output, `<command>.csv`; returns the
/// paths written.
pub fn write(dir: &Path, command: &str, format: Format, outcome: &Outcome) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let doc = Document {
        command,
        status: if outcome.failures.is_empty() { "pass" } else { "fail" },
        failures: &outcome.failures,
        config: &outcome.config,
        results: &outcome.results,
        table: (format == Format::Json).then_some(&outcome.table),
    };
    let json_path = dir.join(format!("{command}.json"));
    let mut text = serde_json::to_string_pretty(&doc).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(&json_path, text)?;
    let mut written = vec![json_path];
    if format == Format::Csv {
        let csv_path = dir.join(format!("{command}.csv"));
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(&outcome.table.columns)?;
        for row in &outcome.table.rows {
            w.write_record(row.iter().map(|v| cell(*v)))?;
        }
        w.flush()?;
        written.push(csv_path);
    }
    Ok(written)
}
