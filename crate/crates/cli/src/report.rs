//! Experiment reports and their on-disk artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }

    /// `|value − expect| ≤ tolerance`.
    pub fn near(name: impl Into<String>, value: f64, expect: f64, tolerance: f64) -> Self {
        let pass = (value - expect).abs() <= tolerance;
        Self::new(name, pass, format!("{value:.6} vs {expect} ± {tolerance}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub experiment: String,
    pub seed: u64,
    #[serde(skip)]
    pub header: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Vec<String>>,
    pub summary: Value,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(experiment: &str, seed: u64, header: &[&str]) -> Self {
        Self {
            experiment: experiment.to_string(),
            seed,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            summary: Value::Null,
            checks: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn check(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn stem(&self) -> String {
        format!("{}_{}", self.experiment, self.seed)
    }

    pub fn csv(&self) -> String {
        let mut out = String::new();
        out.push_str(
            &self
                .header
                .iter()
                .map(|h| csv_field(h))
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push('\n');
        for row in &self.rows {
            out.push_str(
                &row.iter()
                    .map(|f| csv_field(f))
                    .collect::<Vec<_>>()
                    .join(","),
            );
            out.push('\n');
        }
        out
    }

    pub fn json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn summary_lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} seed={} {} {}: {}",
                    self.experiment,
                    self.seed,
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                )
            })
            .collect()
    }
}

fn csv_field(f: &str) -> String {
    if f.contains([',', '"', '\n']) {
        format!("\"{}\"", f.replace('"', "\"\""))
    } else {
        f.to_string()
    }
}

/// Writes `<experiment>_<seed>.csv` and `.json`; the run timestamp goes to
/// the `.log` sidecar only.
pub fn emit_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)?;
    let stem = report.stem();
    let csv = dir.join(format!("{stem}.csv"));
    let json = dir.join(format!("{stem}.json"));
    let log = dir.join(format!("{stem}.log"));
    fs::write(&csv, report.csv())?;
    fs::write(&json, report.json())?;
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log)?;
    writeln!(
        f,
        "unix_time={stamp} experiment={} seed={} pass={}",
        report.experiment,
        report.seed,
        report.all_pass()
    )?;
    Ok(vec![csv, json, log])
}
