//! JSON reports and CSV time series.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::Result;
use crate::sqe::SeriesRow;

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// One pass/fail comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    pub error: f64,
    /// `|value - reference| / error`, or the raw statistic for one-sided checks.
    pub score: f64,
    pub pass: bool,
}

impl Check {
    /// Two-sided z-test against `threshold`.
    pub fn z(name: impl Into<String>, value: f64, reference: f64, error: f64, threshold: f64) -> Self {
        let score = if error > 0.0 {
            (value - reference).abs() / error
        } else if value == reference {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            name: name.into(),
            value,
            reference,
            error,
            score,
            pass: score <= threshold,
        }
    }

    /// Pass iff `pass`; `score` carries whatever statistic the caller chose.
    pub fn flag(name: impl Into<String>, value: f64, reference: f64, error: f64, score: f64, pass: bool) -> Self {
        Self {
            name: name.into(),
            value,
            reference,
            error,
            score,
            pass,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub suite: String,
    pub version: String,
    pub config: RunConfig,
    pub warnings: Vec<String>,
    pub pass: bool,
    pub checks: Vec<Check>,
    /// Suite-specific payload.
    pub data: serde_json::Value,
}

impl Report {
    pub fn new(suite: &str, config: &RunConfig, checks: Vec<Check>, data: serde_json::Value) -> Self {
        let config = config.resolved();
        let warnings = config.model_params().warnings();
        Self {
            suite: suite.to_string(),
            version: CODE_VERSION.to_string(),
            pass: checks.iter().all(|c| c.pass),
            config,
            warnings,
            checks,
            data,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

/// Rows in the order given, header `t,id,value,replica`.
pub fn series_csv(rows: &[SeriesRow]) -> String {
    let mut out = String::from("t,id,value,replica\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.t, r.id, r.value, r.replica);
    }
    out
}

pub fn write_series(path: &Path, rows: &[SeriesRow]) -> Result<()> {
    fs::write(path, series_csv(rows))?;
    Ok(())
}

/// Machine-readable summary of several reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    pub pass: bool,
    pub suites: Vec<(String, bool)>,
}

impl Summary {
    pub fn of(reports: &[Report]) -> Self {
        Self {
            version: CODE_VERSION.to_string(),
            pass: reports.iter().all(|r| r.pass),
            suites: reports.iter().map(|r| (r.suite.clone(), r.pass)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_check() {
        assert!(Check::z("a", 1.0, 0.0, 0.5, 4.0).pass);
        assert!(!Check::z("a", 3.0, 0.0, 0.5, 4.0).pass);
        assert_eq!(Check::z("a", 1.0, 1.0, 0.0, 4.0).score, 0.0);
        assert!(!Check::z("a", 1.0, 2.0, 0.0, 4.0).pass);
    }

    #[test]
    fn csv_layout() {
        let rows = vec![
            SeriesRow {
                t: 0.0,
                id: "f0".into(),
                value: 1.5,
                replica: 0,
            },
            SeriesRow {
                t: 0.25,
                id: "f1".into(),
                value: -2e-7,
                replica: 3,
            },
        ];
        assert_eq!(series_csv(&rows), "t,id,value,replica\n0,f0,1.5,0\n0.25,f1,-0.0000002,3\n");
    }

    #[test]
    fn report_embeds_resolved_config() {
        let r = Report::new("x", &RunConfig::default(), vec![Check::z("c", 0.0, 0.0, 1.0, 4.0)], serde_json::Value::Null);
        assert!(r.pass);
        assert_eq!(r.config.integrator.t, Some(4.0));
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"version\""));
    }
}
