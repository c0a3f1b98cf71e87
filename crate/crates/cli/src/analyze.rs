//! Point estimates, standard errors and intervals for one observed experiment.

use std::fmt::Write as _;

use designbench::estimators::{estimate, ArmFits};
use designbench::report::{render_table, sig6};
use designbench::stratified::{stratified_cross_fitted, stratified_variance};
use designbench::variance::{confidence_interval, variance_with};
use designbench::{
    Assignment, EstimatorId, ObservedSample, PointEstimate, StratifiedSample, VarianceMethod, VarianceReport,
};
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{CliError, CliResult};

pub const ANALYSIS_COLUMNS: [&str; 9] =
    ["estimator", "tau_hat", "se_method", "se", "t_stat", "ci_lower", "ci_upper", "level", "sigma2_negative"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisRow {
    pub estimator: EstimatorId,
    pub tau_hat: f64,
    pub se_method: VarianceMethod,
    pub se: f64,
    /// `None` when `se` is zero.
    pub t_stat: Option<f64>,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub level: f64,
    pub sigma2_negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub n: usize,
    pub n1: usize,
    pub covariates: Vec<String>,
    /// Stratum labels in ascending order; empty when unstratified.
    pub strata: Vec<i64>,
    pub rows: Vec<AnalysisRow>,
}

fn row(est: &PointEstimate<f64>, report: &VarianceReport<f64>, level: f64) -> CliResult<AnalysisRow> {
    let (ci_lower, ci_upper) = confidence_interval(est, report, level).map_err(|e| CliError::from_core("ci", e))?;
    Ok(AnalysisRow {
        estimator: est.estimator,
        tau_hat: est.tau_hat,
        se_method: report.method,
        se: report.se,
        t_stat: (report.se > 0.0).then(|| est.tau_hat / report.se),
        ci_lower,
        ci_upper,
        level,
        sigma2_negative: report.negative,
    })
}

/// One row per (estimator, SE method), estimators outermost. Difference in
/// means takes its SEs from the intercept-only fit.
pub fn analyze(
    data: &Dataset,
    estimators: &[EstimatorId],
    methods: &[VarianceMethod],
    level: f64,
) -> CliResult<Analysis> {
    if !(level > 0.0 && level < 1.0) {
        return Err(CliError::Usage(format!("--level must lie in (0, 1), got {level}")));
    }
    let assignment = Assignment::new(data.treated.clone());
    let sample = ObservedSample::new(data.y.clone(), assignment.clone(), data.x.clone())
        .map_err(|e| CliError::from_core("design", e))?;
    let mut rows = Vec::new();
    let mut strata = Vec::new();
    if let Some(labels) = &data.strata {
        if let Some(e) = estimators.iter().find(|&&e| e != EstimatorId::Cf) {
            return Err(CliError::Usage(format!("stratified analysis supports estimator cf only, not {e}")));
        }
        if let Some(m) = methods.iter().find(|m| !matches!(m, VarianceMethod::Hc3 | VarianceMethod::DbHc3)) {
            return Err(CliError::Usage(format!("stratified analysis supports hc3 and dbhc3 only, not {m}")));
        }
        let labelled = sample.clone().with_strata(labels.clone()).map_err(|e| CliError::from_core("strata", e))?;
        let stratified = StratifiedSample::from_labelled(&labelled).map_err(|e| CliError::from_core("cf", e))?;
        strata = stratified.strata().iter().map(|(s, _)| *s).collect();
        let est = stratified_cross_fitted(&stratified).map_err(|e| CliError::from_core("cf", e))?;
        for &m in methods {
            let report = stratified_variance(&stratified, m).map_err(|e| CliError::from_core("cf", e))?;
            rows.push(row(&est, &report, level)?);
        }
    } else {
        let intercept = sample.intercept_only().map_err(|e| CliError::from_core("dif", e))?;
        let mut adjusted_fits = None;
        let mut intercept_fits = None;
        for &id in estimators {
            let (s, slot) = if id == EstimatorId::Dif { (&intercept, &mut intercept_fits) } else { (&sample, &mut adjusted_fits) };
            if slot.is_none() {
                *slot = Some(ArmFits::fit(s).map_err(|e| CliError::from_core(id.as_str(), e))?);
            }
            let fits = slot.as_ref().expect("fitted above");
            let est = estimate(id, s, fits).map_err(|e| CliError::from_core(id.as_str(), e))?;
            for &m in methods {
                let report = variance_with(m, s, fits).map_err(|e| CliError::from_core(id.as_str(), e))?;
                rows.push(row(&est, &report, level)?);
            }
        }
    }
    Ok(Analysis { n: sample.n(), n1: sample.n1(), covariates: data.covariates.clone(), strata, rows })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl Analysis {
    /// Full-precision CSV in [`ANALYSIS_COLUMNS`] order, `\n` line endings.
    pub fn to_csv(&self) -> String {
        let mut out = ANALYSIS_COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.estimator, r.tau_hat, r.se_method, r.se, opt(r.t_stat), r.ci_lower, r.ci_upper, r.level, r.sigma2_negative
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("analysis serializes");
        s.push('\n');
        s
    }

    /// Six significant digits; a negative variance estimate is flagged with `*`.
    pub fn to_table(&self) -> String {
        let mut out = format!("n = {}, n1 = {}, covariates = {}", self.n, self.n1, self.covariates.len());
        if !self.strata.is_empty() {
            let _ = write!(out, ", strata = {}", self.strata.len());
        }
        out.push_str("\n\n");
        let level = self.rows.first().map_or(0.95, |r| r.level);
        let ci = format!("{}% CI", sig6(100.0 * level));
        let header = ["estimator", "tau_hat", "se_method", "se", "t", &ci];
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.estimator.to_string(),
                    sig6(r.tau_hat),
                    r.se_method.label().to_string(),
                    format!("{}{}", sig6(r.se), if r.sigma2_negative { "*" } else { "" }),
                    r.t_stat.map(sig6).unwrap_or_else(|| "NA".into()),
                    format!("[{}, {}]", sig6(r.ci_lower), sig6(r.ci_upper)),
                ]
            })
            .collect();
        out.push_str(&render_table(&header, &body));
        if self.rows.iter().any(|r| r.sigma2_negative) {
            out.push_str("* variance estimate was negative; SE reported as 0\n");
        }
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Table => self.to_table(),
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}
