//! Structured output: versioned JSON envelopes, study CSV, atomic writes.
//!
//! Output bytes are a pure function of (input, flags, seed): serde keeps
//! struct field order, and every number goes through the standard shortest
//! round-trip float formatting.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use expaft::StudyReport;

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Envelope for every JSON document the CLI emits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    pub command: String,
    pub flags: serde_json::Value,
    pub results: T,
}

/// Result of a single fit command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub selected_variables: Vec<String>,
    /// Refit coefficients on the selected variables (pilot coefficients
    /// when penalization is off).
    pub coefficients: Vec<f64>,
    /// Unpenalized intercept estimate when the model includes one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    pub standard_errors: Vec<f64>,
    pub confidence_intervals: Vec<(f64, f64)>,
    pub confidence_level: f64,
    pub tau: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub n_used: usize,
    pub n_dropped: usize,
    pub censoring_fraction: f64,
    /// True when the selection was empty, so nothing could be refit.
    pub refit_skipped: bool,
}

/// One Kaplan-Meier curve row.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurveRow {
    pub time: f64,
    pub survival: f64,
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization");
    s.push('\n');
    s
}

/// Write bytes to `path` atomically: temp file in the same directory, then
/// a rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    let mut tmp =
        tempfile::NamedTempFile::new_in(dir.unwrap_or_else(|| Path::new("."))).map_err(|e| {
            CliError::Write {
                path: path.to_path_buf(),
                source: e,
            }
        })?;
    tmp.write_all(bytes).map_err(|e| CliError::Write {
        path: path.to_path_buf(),
        source: e,
    })?;
    tmp.persist(path).map_err(|e| CliError::Write {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

/// Long-format study CSV: one row per (method, metric).
pub fn study_csv(report: &StudyReport) -> String {
    let mut out = String::from("method,n,p,rate,lambda_rule,metric,value,reps,seed\n");
    for m in &report.methods {
        let mut push = |metric: &str, value: f64| {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                m.method.label(),
                report.n,
                report.p,
                report.target_censoring,
                report.lambda_rule.label(),
                metric,
                value,
                report.reps,
                report.seed
            ));
        };
        push("l2_error", m.l2_error);
        push("l2_sd", m.l2_sd);
        push("sd_active", m.sd_active);
        for (j, v) in m.sd_by_coord.iter().enumerate() {
            push(&format!("sd_coord_{}", j + 1), *v);
        }
        if let Some(v) = m.pct_true_zeros {
            push("pct_true_zeros", v);
        }
        if let Some(v) = m.pct_false_zeros {
            push("pct_false_zeros", v);
        }
        if let Some(v) = m.exact_support_rate {
            push("exact_support_rate", v);
        }
        push("mean_censored_fraction", m.mean_censored_fraction);
        push("excluded", m.excluded as f64);
    }
    out
}

/// Plot-ready two-column CSV for a survival curve.
pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from("time,survival\n");
    for r in rows {
        out.push_str(&format!("{},{}\n", r.time, r.survival));
    }
    out
}
