//! Report rows and their CSV / JSON serialization.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const CSV_HEADER: &str = "experiment,seed,cell,metric,value";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    /// Guess from the file extension; anything but `.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

/// `v` rounded to 6 significant digits.
pub fn round_sig(v: f64) -> f64 {
    if v.is_finite() {
        format!("{v:.5e}").parse().expect("formatted float parses")
    } else {
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub seed: u64,
    pub cell: String,
    pub metric: String,
    pub value: f64,
}

impl Row {
    /// The value is stored already rounded, so emitted files parse back to equal rows.
    pub fn new(experiment: &str, seed: u64, cell: impl Into<String>, metric: impl Into<String>, value: f64) -> Self {
        Self {
            experiment: experiment.to_string(),
            seed,
            cell: cell.into(),
            metric: metric.into(),
            value: round_sig(value),
        }
    }
}

/// Run-level facts that are not part of the deterministic rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub experiment: String,
    pub config_hash: String,
    pub wall_time_secs: f64,
    pub workers: usize,
    pub cells: usize,
    pub resumed_cells: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub rows: Vec<Row>,
    pub meta: Metadata,
}

impl RunReport {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// The value of `metric` in `cell` for `seed`, if present.
    pub fn value(&self, seed: u64, cell: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.seed == seed && r.cell == cell && r.metric == metric)
            .map(|r| r.value)
    }

    /// Values of `metric` in `cell` across seeds, in row order.
    pub fn values(&self, cell: &str, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.cell == cell && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }
}

/// Serialize `rows` to `out`. Line endings are `\n`.
pub fn write_rows<W: Write>(rows: &[Row], format: Format, out: W) -> Result<()> {
    if let Some(r) = rows.iter().find(|r| !r.value.is_finite()) {
        return Err(CliError::Runtime(format!(
            "non-finite value for {} / {} (seed {})",
            r.cell, r.metric, r.seed
        )));
    }
    let fail = |e: String| CliError::Runtime(format!("serializing report: {e}"));
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(out);
            for r in rows {
                w.serialize(r).map_err(|e| fail(e.to_string()))?;
            }
            w.flush().map_err(|e| fail(e.to_string()))
        }
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, rows).map_err(|e| fail(e.to_string()))?;
            out.write_all(b"\n").map_err(|e| fail(e.to_string()))
        }
    }
}

pub fn parse_rows(text: &str, format: Format) -> Result<Vec<Row>> {
    let bad = |e: String| CliError::Data(format!("malformed report: {e}"));
    match format {
        Format::Csv => {
            let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(text.as_bytes());
            let header = reader.headers().map_err(|e| bad(e.to_string()))?;
            if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
                return Err(bad(format!("header is not `{CSV_HEADER}`")));
            }
            reader
                .deserialize()
                .map(|r| r.map_err(|e| bad(e.to_string())))
                .collect()
        }
        Format::Json => serde_json::from_str(text).map_err(|e| bad(e.to_string())),
    }
}

pub fn read_report(path: &Path) -> Result<Vec<Row>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    parse_rows(&text, Format::from_path(path))
}

/// `report.csv` → `report.meta.json`.
pub fn metadata_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Write the rows to `path` and the metadata next to it. An empty report is an error
/// and creates nothing.
pub fn emit_report(report: &RunReport, format: Format, path: &Path) -> Result<()> {
    if report.is_empty() {
        return Err(CliError::Runtime("refusing to write an empty report".into()));
    }
    let mut buf = Vec::new();
    write_rows(&report.rows, format, &mut buf)?;
    fs::write(path, &buf).map_err(CliError::io(path))?;
    let meta = metadata_path(path);
    let file = File::create(&meta).map_err(CliError::io(&meta))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &report.meta)
        .map_err(|e| CliError::Runtime(format!("writing metadata: {e}")))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(CliError::io(&meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> Metadata {
        Metadata {
            experiment: "vote".into(),
            config_hash: "00".into(),
            wall_time_secs: 1.5,
            workers: 1,
            cells: 1,
            resumed_cells: 0,
        }
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(round_sig(2.0 / 3.0), 0.666667);
        assert_eq!(round_sig(1234567.0), 1234570.0);
        assert_eq!(round_sig(-0.000123456789), -0.000123457);
        assert_eq!(round_sig(0.0), 0.0);
        assert_eq!(Row::new("x", 0, "c", "m", 66.1).value, 66.1);
    }

    #[test]
    fn one_row_is_two_csv_lines() {
        let mut buf = Vec::new();
        write_rows(&[Row::new("vote", 3, "N=25", "borda_mean", 69.8)], Format::Csv, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "experiment,seed,cell,metric,value\nvote,3,N=25,borda_mean,69.8\n");
    }

    #[test]
    fn fields_with_commas_are_quoted() {
        let rows = vec![Row::new("distill", 0, "N=3,p=1", "single_acc", 91.2)];
        let mut buf = Vec::new();
        write_rows(&rows, Format::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"N=3,p=1\""));
        assert_eq!(parse_rows(&text, Format::Csv).unwrap(), rows);
    }

    #[test]
    fn empty_report_creates_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let report = RunReport { rows: vec![], meta: meta() };
        assert!(emit_report(&report, Format::Csv, &path).is_err());
        assert!(!path.exists());
        assert!(!metadata_path(&path).exists());
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let mut buf = Vec::new();
        assert!(write_rows(&[Row::new("x", 0, "c", "m", f64::NAN)], Format::Json, &mut buf).is_err());
    }

    #[test]
    fn emit_writes_metadata_beside_the_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let report = RunReport {
            rows: vec![Row::new("vote", 0, "pool", "acc", 0.5)],
            meta: meta(),
        };
        emit_report(&report, Format::Json, &path).unwrap();
        assert_eq!(read_report(&path).unwrap(), report.rows);
        let m: Metadata = serde_json::from_str(&fs::read_to_string(metadata_path(&path)).unwrap()).unwrap();
        assert_eq!(m, report.meta);
    }
}
