//! Text, JSON and CSV rendering of results.

use serde::Serialize;
use serde_json::Value;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::corpus::CorpusReport;
use crate::error::{Result, UsdError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = UsdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(UsdError::UnknownFormat(other.to_string())),
        }
    }
}

/// Pretty JSON at full precision.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

/// `field,value` rows for an arbitrary serializable value; nested keys are
/// joined with `.` and array elements are indexed.
pub fn to_flat_csv<T: Serialize>(value: &T) -> Result<String> {
    let mut rows = Vec::new();
    flatten("", &serde_json::to_value(value)?, &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["field", "value"]).map_err(csv_err)?;
    for (k, v) in rows {
        w.write_record([k, v]).map_err(csv_err)?;
    }
    finish(w)
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn csv_err(e: csv::Error) -> UsdError {
    UsdError::InvalidArgument(format!("csv: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| UsdError::InvalidArgument(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn opt4(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn opt_full(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Serializes a corpus run. Text uses four decimals; JSON and CSV keep full
/// precision.
pub fn emit_report(report: &CorpusReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => to_json(report),
        ReportFormat::Csv => corpus_csv(report),
        ReportFormat::Text => Ok(corpus_text(report)),
    }
}

const CSV_COLUMNS: [&str; 13] = [
    "name",
    "bound",
    "expected_bound",
    "p_opt",
    "expected_p_opt",
    "bound_gap",
    "class",
    "expected_class",
    "schmidt_residual",
    "closed_form_residual",
    "gamma_opt",
    "pass",
    "provenance",
];

fn corpus_csv(report: &CorpusReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for c in &report.cases {
        let gamma = c
            .gamma_opt
            .iter()
            .map(|g| g.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        w.write_record([
            c.name.clone(),
            c.bound.to_string(),
            opt_full(c.expected_bound),
            c.p_opt.to_string(),
            opt_full(c.expected_p_opt),
            c.bound_gap.to_string(),
            c.class.to_string(),
            c.expected_class.map_or_else(String::new, |l| l.to_string()),
            c.schmidt_residual.to_string(),
            opt_full(c.closed_form_residual),
            gamma,
            c.pass.to_string(),
            c.provenance.clone(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

fn corpus_text(report: &CorpusReport) -> String {
    let header = [
        "case", "bound", "expected", "p_opt", "expected", "gap", "class", "status",
    ];
    let rows: Vec<[String; 8]> = report
        .cases
        .iter()
        .map(|c| {
            [
                c.name.clone(),
                format!("{:.4}", c.bound),
                opt4(c.expected_bound),
                format!("{:.4}", c.p_opt),
                opt4(c.expected_p_opt),
                format!("{:.4}", c.bound_gap),
                c.class.to_string(),
                if c.pass { "pass" } else { "FAIL" }.to_string(),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: &[&str], out: &mut String| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
            if i == 0 || i == 6 || i == 7 {
                let _ = write!(s, "{cell:<w$}  ");
            } else {
                let _ = write!(s, "{cell:>w$}  ");
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(&header, &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(
        &rule.iter().map(String::as_str).collect::<Vec<_>>(),
        &mut out,
    );
    for row in &rows {
        line(
            &row.iter().map(String::as_str).collect::<Vec<_>>(),
            &mut out,
        );
    }
    let failed = report.cases.iter().filter(|c| !c.pass).count();
    let _ = writeln!(
        out,
        "\n{} case(s), {} failed (seed {})",
        report.cases.len(),
        failed,
        report.seed
    );
    out
}
