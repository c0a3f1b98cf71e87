//! Simulation result rows and their CSV/JSON serializations.
//!
//! CSV output is byte-stable: fixed column order, `.` decimals, `\n` line
//! endings, shortest round-trip float formatting, empty fields for undefined
//! values.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::estimators::EstimatorId;
use crate::simulation::{ErrorKind, SimConfig};
use crate::variance::VarianceMethod;

pub const SIM_RESULT_COLUMNS: [&str; 14] = [
    "design",
    "df",
    "error_kind",
    "p",
    "estimator",
    "se_method",
    "bias",
    "relative_bias",
    "sd",
    "sd_ratio_vs_cf",
    "coverage",
    "mean_se",
    "failures",
    "reps",
];

/// One `(p, estimator, se_method)` cell. Point-estimate fields repeat across
/// the SE rows of the same estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub design: String,
    pub df: u32,
    pub error_kind: ErrorKind,
    /// Number of covariates, excluding the intercept.
    pub p: usize,
    pub estimator: EstimatorId,
    pub se_method: Option<VarianceMethod>,
    pub bias: Option<f64>,
    pub relative_bias: Option<f64>,
    pub sd: Option<f64>,
    pub sd_ratio_vs_cf: Option<f64>,
    pub coverage: Option<f64>,
    pub mean_se: Option<f64>,
    /// Replications excluded from this row's aggregates.
    pub failures: usize,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub design: String,
    pub config: SimConfig,
    pub rows: Vec<SimRow>,
}

fn field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SimRow {
    fn csv_line(&self) -> String {
        [
            self.design.clone(),
            self.df.to_string(),
            self.error_kind.to_string(),
            self.p.to_string(),
            self.estimator.to_string(),
            self.se_method.map(|m| m.to_string()).unwrap_or_default(),
            field(self.bias),
            field(self.relative_bias),
            field(self.sd),
            field(self.sd_ratio_vs_cf),
            field(self.coverage),
            field(self.mean_se),
            self.failures.to_string(),
            self.reps.to_string(),
        ]
        .join(",")
    }
}

impl SimResult {
    pub fn to_csv(&self) -> String {
        let mut out = SIM_RESULT_COLUMNS.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serializes");
        s.push('\n');
        s
    }

    /// Writes `simresult_<design>.csv` and `.json` into `dir`, creating it if needed.
    pub fn write_files(&self, dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv = dir.join(format!("simresult_{}.csv", self.design));
        let json = dir.join(format!("simresult_{}.json", self.design));
        fs::write(&csv, self.to_csv())?;
        fs::write(&json, self.to_json())?;
        Ok((csv, json))
    }

    /// Human-readable summary with six significant digits.
    pub fn to_table(&self) -> String {
        let header = ["p", "estimator", "se", "bias", "rel_bias", "sd", "sd_ratio", "coverage", "mean_se", "fail"];
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.p.to_string(),
                    r.estimator.to_string(),
                    r.se_method.map(|m| m.label().to_string()).unwrap_or_else(|| "-".into()),
                    sig_opt(r.bias),
                    sig_opt(r.relative_bias),
                    sig_opt(r.sd),
                    sig_opt(r.sd_ratio_vs_cf),
                    sig_opt(r.coverage),
                    sig_opt(r.mean_se),
                    r.failures.to_string(),
                ]
            })
            .collect();
        render_table(&header, &body)
    }
}

/// `x` with six significant digits, trailing zeros removed.
pub fn sig6(x: f64) -> String {
    format_significant(x, 6)
}

fn sig_opt(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_else(|| "NA".into())
}

pub fn format_significant(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let exponent = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&exponent) {
        let s = format!("{:.*e}", digits.saturating_sub(1), x);
        let (mantissa, exp) = s.split_once('e').expect("scientific format");
        return format!("{}e{exp}", trim_zeros(mantissa));
    }
    let decimals = (digits as i32 - 1 - exponent).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Left-aligned first column, right-aligned others, two-space gutters.
pub fn render_table(header: &[&str], body: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut parts = Vec::new();
        for (k, cell) in cells.enumerate() {
            parts.push(if k == 0 { format!("{cell:<w$}", w = widths[k]) } else { format!("{cell:>w$}", w = widths[k]) });
        }
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut header.iter().copied());
    for row in body {
        line(&mut row.iter().map(String::as_str));
    }
    out
}
