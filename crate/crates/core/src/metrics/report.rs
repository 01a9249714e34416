use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::write_file;

pub const REPORT_COLUMNS: [&str; 11] = [
    "scenario",
    "ms_ds",
    "simple_ds",
    "simple_new",
    "simple_all",
    "adapter_ds",
    "adapter_new",
    "adapter_all",
    "f1_A",
    "f1_B",
    "f1_C",
];

pub const OVERALL: &str = "Overall";

/// One table row: a scenario id and its ten scores in column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub values: [f64; 10],
}

impl ReportRow {
    /// Column-wise mean of `rows`, labelled [`OVERALL`].
    pub fn mean(rows: &[ReportRow]) -> Option<ReportRow> {
        if rows.is_empty() {
            return None;
        }
        let mut values = [0.0; 10];
        for r in rows {
            for (acc, v) in values.iter_mut().zip(r.values) {
                *acc += v;
            }
        }
        for v in &mut values {
            *v /= rows.len() as f64;
        }
        Some(ReportRow {
            scenario: OVERALL.to_string(),
            values,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            _ => Err(Error::Config(format!("unknown report format `{s}`"))),
        }
    }
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut s = REPORT_COLUMNS.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.scenario);
        for v in r.values {
            write!(s, ",{v:.4}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn report_markdown(rows: &[ReportRow]) -> String {
    let mut s = format!("| {} |\n", REPORT_COLUMNS.join(" | "));
    s.push('|');
    for _ in REPORT_COLUMNS {
        s.push_str("---|");
    }
    s.push('\n');
    for r in rows {
        write!(s, "| {} |", r.scenario).unwrap();
        for v in r.values {
            write!(s, " {v:.4} |").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn emit_report(rows: &[ReportRow], format: ReportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => report_csv(rows),
        ReportFormat::Markdown => report_markdown(rows),
    };
    write_file(path, text.as_bytes())
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty report".into()))?;
    if header != REPORT_COLUMNS.join(",") {
        return Err(Error::Format(format!("unexpected report header `{header}`")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != REPORT_COLUMNS.len() {
                return Err(Error::Format(format!("report line {}: {} fields", i + 2, fields.len())));
            }
            let mut values = [0.0; 10];
            for (v, f) in values.iter_mut().zip(&fields[1..]) {
                *v = f
                    .parse()
                    .map_err(|_| Error::Format(format!("report line {}: bad number `{f}`", i + 2)))?;
            }
            Ok(ReportRow {
                scenario: fields[0].to_string(),
                values,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str, base: f64) -> ReportRow {
        let mut values = [0.0; 10];
        for (i, v) in values.iter_mut().enumerate() {
            *v = base + i as f64 / 100.0;
        }
        ReportRow {
            scenario: name.into(),
            values,
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(report_csv(&[]).lines().count(), 1);
    }

    #[test]
    fn one_row_two_lines() {
        let csv = report_csv(&[row("C1C2", 0.5)]);
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("C1C2,0.5000,0.5100"));
    }

    #[test]
    fn mean_row() {
        let m = ReportRow::mean(&[row("a", 0.2), row("b", 0.4)]).unwrap();
        assert_eq!(m.scenario, OVERALL);
        assert!((m.values[0] - 0.3).abs() < 1e-12);
        assert!(ReportRow::mean(&[]).is_none());
    }

    #[test]
    fn markdown_has_separator() {
        let md = report_markdown(&[row("x", 0.1)]);
        assert_eq!(md.lines().count(), 3);
        assert!(md.lines().nth(1).unwrap().starts_with("|---|"));
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(parse_report_csv("a,b\n").is_err());
    }
}
