use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::eval::{EvalReport, Stat};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = [
    "strategy",
    "query_id",
    "recall",
    "diff_k",
    "n_input_tokens",
    "n_chunks",
    "reduction_pct",
    "subem",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(format!("unknown report format `{s}` (expected csv or json)")),
        }
    }
}

fn two(x: f64) -> String {
    format!("{x:.2}")
}

/// Per-row CSV. Floats are rounded to two decimals; missing values are empty.
pub fn to_csv(report: &EvalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for row in &report.rows {
        let m = row.metrics.as_ref();
        let opt = |v: Option<String>| v.unwrap_or_default();
        w.write_record([
            row.strategy.clone(),
            row.query_id.clone(),
            opt(m.and_then(|m| m.context_recall).map(two)),
            opt(m.and_then(|m| m.diff_k).map(|d| d.to_string())),
            opt(m.map(|m| m.n_input_tokens.to_string())),
            opt(m.map(|m| m.n_selected_chunks.to_string())),
            opt(m.and_then(|m| m.reduction_pct).map(two)),
            opt(m.and_then(|m| m.subem).map(|s| s.to_string())),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn to_json(report: &EvalReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn emit_report(report: &EvalReport, format: ReportFormat, path: &Path) -> Result<()> {
    let body = match format {
        ReportFormat::Csv => to_csv(report)?,
        ReportFormat::Json => to_json(report)?,
    };
    std::fs::write(path, body).map_err(|e| Error::io(format!("write report {}", path.display()), e))
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Fixed-width aggregate table for the console.
pub fn summary_table(report: &EvalReport) -> String {
    let cell = |s: Option<Stat>| match s {
        Some(s) => format!("{:.2} ± {:.2}", s.mean, s.std),
        None => "-".into(),
    };
    let width = report
        .aggregates
        .iter()
        .map(|a| a.strategy.chars().count())
        .max()
        .unwrap_or(0)
        .max(8);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>5}  {:>18}  {:>20}  {:>22}  {:>18}",
        "strategy", "n", "recall", "diff_k", "n_input_tokens", "reduction_pct"
    );
    for a in &report.aggregates {
        let _ = writeln!(
            out,
            "{:<width$}  {:>5}  {:>18}  {:>20}  {:>22}  {:>18}",
            a.strategy,
            a.n_queries - a.n_errors,
            cell(a.recall),
            cell(a.diff_k),
            cell(a.n_input_tokens),
            cell(a.reduction_pct),
        );
    }
    out
}
