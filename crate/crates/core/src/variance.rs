//! Heteroskedasticity-robust variance estimators for the adjusted ATE
//! estimators and normal confidence intervals.
//!
//! Every `sigma2` here estimates `Var(sqrt(n) (tau_hat - tau))`. The standard
//! error of `tau_hat` is therefore `sqrt(sigma2 / n)`, never `sqrt(sigma2)`.

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimators::{ArmFits, PointEstimate};
use crate::population::ObservedSample;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceMethod {
    Hc0,
    Hc2,
    Hc3,
    DbHc3,
}

impl VarianceMethod {
    pub const ALL: [VarianceMethod; 4] =
        [VarianceMethod::Hc0, VarianceMethod::Hc2, VarianceMethod::Hc3, VarianceMethod::DbHc3];

    pub fn as_str(self) -> &'static str {
        match self {
            VarianceMethod::Hc0 => "hc0",
            VarianceMethod::Hc2 => "hc2",
            VarianceMethod::Hc3 => "hc3",
            VarianceMethod::DbHc3 => "dbhc3",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            VarianceMethod::Hc0 => "HC0",
            VarianceMethod::Hc2 => "HC2",
            VarianceMethod::Hc3 => "HC3",
            VarianceMethod::DbHc3 => "dbHC3",
        }
    }
}

impl fmt::Display for VarianceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VarianceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VarianceMethod::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variance method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceReport<T> {
    pub method: VarianceMethod,
    /// Estimate of `Var(sqrt(n) (tau_hat - tau))`.
    pub sigma2: T,
    /// `sqrt(max(sigma2, 0) / n)`.
    pub se: T,
    /// Set when `sigma2` came out negative and `se` was clamped to zero.
    pub negative: bool,
}

impl<T: Scalar> VarianceReport<T> {
    pub fn new(method: VarianceMethod, sigma2: T, n: usize) -> Self {
        let negative = sigma2 < T::zero();
        let se = (sigma2.max(T::zero()) / T::of_count(n)).sqrt();
        Self { method, sigma2, se, negative }
    }
}

fn arm_scale<T: Scalar>(n: usize, nt: usize) -> Result<T> {
    if nt < 2 {
        return Err(Error::InvalidDesign(format!("variance estimation needs two units per arm, got {nt}")));
    }
    Ok(T::of_count(n) / (T::of_count(nt) * T::of_count(nt - 1)))
}

/// `n/(n1(n1-1)) sum_T r_i^2 + n/(n0(n0-1)) sum_C r_i^2` for per-unit residuals `r`.
fn two_arm_sum<T: Scalar>(sample: &ObservedSample<T>, r: &Array1<T>) -> Result<T> {
    let s1 = arm_scale::<T>(sample.n(), sample.n1())?;
    let s0 = arm_scale::<T>(sample.n(), sample.n0())?;
    let mut total = T::zero();
    for (i, t) in sample.assignment().iter().enumerate() {
        total += if t { s1 } else { s0 } * r[i] * r[i];
    }
    Ok(total)
}

fn inflated<T: Scalar>(fits: &ArmFits<T>, power: T) -> Result<Array1<T>> {
    let e = fits.residuals();
    let h = fits.leverages();
    let mut out = Array1::zeros(e.len());
    for i in 0..e.len() {
        let slack = T::one() - h[i];
        if slack <= T::rel_tol() {
            return Err(Error::LeverageOne { index: i });
        }
        out[i] = e[i] / slack.powf(power);
    }
    Ok(out)
}

pub fn hc0<T: Scalar>(sample: &ObservedSample<T>) -> Result<VarianceReport<T>> {
    variance_with(VarianceMethod::Hc0, sample, &ArmFits::fit(sample)?)
}

pub fn hc2<T: Scalar>(sample: &ObservedSample<T>) -> Result<VarianceReport<T>> {
    variance_with(VarianceMethod::Hc2, sample, &ArmFits::fit(sample)?)
}

pub fn hc3<T: Scalar>(sample: &ObservedSample<T>) -> Result<VarianceReport<T>> {
    variance_with(VarianceMethod::Hc3, sample, &ArmFits::fit(sample)?)
}

pub fn dbhc3<T: Scalar>(sample: &ObservedSample<T>) -> Result<VarianceReport<T>> {
    variance_with(VarianceMethod::DbHc3, sample, &ArmFits::fit(sample)?)
}

/// Raw `sigma2` for `method`.
pub fn sigma2_with<T: Scalar>(method: VarianceMethod, sample: &ObservedSample<T>, fits: &ArmFits<T>) -> Result<T> {
    match method {
        VarianceMethod::Hc0 => two_arm_sum(sample, &fits.residuals()),
        VarianceMethod::Hc2 => two_arm_sum(sample, &inflated(fits, T::of(0.5))?),
        VarianceMethod::Hc3 => two_arm_sum(sample, &fits.loo_residuals()?),
        VarianceMethod::DbHc3 => {
            let loo = fits.loo_residuals()?;
            let base = two_arm_sum(sample, &loo)?;
            let [tt, cc, tc] = dbhc3_corrections(sample, &loo);
            Ok(base + tt + cc - tc)
        }
    }
}

pub fn variance_with<T: Scalar>(
    method: VarianceMethod,
    sample: &ObservedSample<T>,
    fits: &ArmFits<T>,
) -> Result<VarianceReport<T>> {
    Ok(VarianceReport::new(method, sigma2_with(method, sample, fits)?, sample.n()))
}

/// The three second-order terms added to HC3, each with its coefficient
/// applied: `[treated-treated, control-control, treated-control]`. dbHC3 is
/// `HC3 + tt + cc - tc`. `P_ij` are full-sample hat entries and `loo` the
/// within-arm leave-one-out residuals.
pub fn dbhc3_corrections<T: Scalar>(sample: &ObservedSample<T>, loo: &Array1<T>) -> [T; 3] {
    let a: Array1<T> = Array1::from_iter(sample.assignment().iter().zip(loo).map(|(t, &e)| if t { e } else { T::zero() }));
    let b = loo - &a;
    let projection = sample.projection();
    let s_tt = projection.offdiag_squared_hat_form(a.view(), a.view());
    let s_cc = projection.offdiag_squared_hat_form(b.view(), b.view());
    let s_tc = projection.offdiag_squared_hat_form(a.view(), b.view());
    let n = T::of_count(sample.n());
    let n1 = T::of_count(sample.n1());
    let n0 = T::of_count(sample.n0());
    [
        n0 * n0 * n / n1.powi(4) * s_tt,
        n1 * n1 * n / n0.powi(4) * s_cc,
        T::of(2.0) * n / (n0 * n1) * s_tc,
    ]
}

/// Two-sided standard normal critical value for coverage `level`.
pub fn normal_critical_value(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

/// `tau_hat -/+ z_{(1+level)/2} se`.
pub fn confidence_interval<T: Scalar>(estimate: &PointEstimate<T>, report: &VarianceReport<T>, level: f64) -> Result<(T, T)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let half = T::of(normal_critical_value(level)) * report.se;
    Ok((estimate.tau_hat - half, estimate.tau_hat + half))
}
