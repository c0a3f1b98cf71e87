//! Cross-fitted estimation and HC3/dbHC3 inference for experiments randomized
//! independently within a few large strata.

use crate::error::{Error, Result};
use crate::estimators::{cross_fitted_with, ArmFits, EstimatorId, PointEstimate};
use crate::population::ObservedSample;
use crate::scalar::Scalar;
use crate::variance::{sigma2_with, VarianceMethod, VarianceReport};

/// Per-stratum samples with weights `c_s = n_s / N`.
#[derive(Debug, Clone)]
pub struct StratifiedSample<T> {
    strata: Vec<(i64, ObservedSample<T>)>,
    weights: Vec<T>,
    total: usize,
}

impl<T: Scalar> StratifiedSample<T> {
    /// Builds from labelled strata, each an independent experiment whose
    /// covariates are centered within the stratum.
    pub fn new(strata: Vec<(i64, ObservedSample<T>)>) -> Result<Self> {
        if strata.is_empty() {
            return Err(Error::InvalidDesign("no strata".into()));
        }
        let total: usize = strata.iter().map(|(_, s)| s.n()).sum();
        let weights = strata.iter().map(|(_, s)| T::of_count(s.n()) / T::of_count(total)).collect();
        Ok(Self { strata, weights, total })
    }

    /// Splits a sample carrying stratum labels; strata are ordered by label.
    pub fn from_labelled(sample: &ObservedSample<T>) -> Result<Self> {
        let labels = sample
            .strata()
            .ok_or_else(|| Error::InvalidDesign("sample has no stratum labels".into()))?;
        let mut groups: std::collections::BTreeMap<i64, Vec<usize>> = Default::default();
        for (i, &s) in labels.iter().enumerate() {
            groups.entry(s).or_default().push(i);
        }
        let strata = groups
            .into_iter()
            .map(|(label, rows)| {
                sample
                    .subsample(&rows)
                    .map(|s| (label, s))
                    .map_err(|e| Error::Stratum { stratum: label, source: Box::new(e) })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(strata)
    }

    pub fn strata(&self) -> &[(i64, ObservedSample<T>)] {
        &self.strata
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn total(&self) -> usize {
        self.total
    }

    fn fits(&self) -> Result<Vec<ArmFits<T>>> {
        self.strata
            .iter()
            .map(|(label, s)| ArmFits::fit(s).map_err(|e| annotate(*label, e)))
            .collect()
    }
}

fn annotate(stratum: i64, err: Error) -> Error {
    Error::Stratum { stratum, source: Box::new(err) }
}

/// `sum_s c_s (mu_1s^cf - mu_0s^cf)`.
pub fn stratified_cross_fitted<T: Scalar>(sample: &StratifiedSample<T>) -> Result<PointEstimate<T>> {
    let fits = sample.fits()?;
    let mut mu1 = T::zero();
    let mut mu0 = T::zero();
    for (((label, s), fit), &c) in sample.strata.iter().zip(&fits).zip(&sample.weights) {
        let est = cross_fitted_with(s, fit).map_err(|e| annotate(*label, e))?;
        mu1 += c * est.mu1_hat;
        mu0 += c * est.mu0_hat;
    }
    Ok(PointEstimate { estimator: EstimatorId::Cf, tau_hat: mu1 - mu0, mu1_hat: mu1, mu0_hat: mu0 })
}

/// Stratified variance with its per-stratum ingredients.
#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedVariance<T> {
    /// Combined report: `se = sqrt(sum_s c_s^2 sigma2_s / n_s)`, with
    /// `sigma2 = N se^2` so that `se = sqrt(sigma2 / N)`.
    pub report: VarianceReport<T>,
    /// `sum_s c_s^2 sigma2_s`, the weighted combination of per-stratum
    /// `sqrt(n_s)`-scale estimates.
    pub weighted_sum: T,
    /// Per-stratum `sigma2_s` on each stratum's own `sqrt(n_s)` scale.
    pub per_stratum: Vec<T>,
}

pub fn stratified_variance<T: Scalar>(sample: &StratifiedSample<T>, method: VarianceMethod) -> Result<VarianceReport<T>> {
    Ok(stratified_variance_detail(sample, method)?.report)
}

pub fn stratified_variance_detail<T: Scalar>(
    sample: &StratifiedSample<T>,
    method: VarianceMethod,
) -> Result<StratifiedVariance<T>> {
    if !matches!(method, VarianceMethod::Hc3 | VarianceMethod::DbHc3) {
        return Err(Error::InvalidConfig(format!(
            "stratified inference supports hc3 and dbhc3, not {method}"
        )));
    }
    let fits = sample.fits()?;
    let mut per_stratum = Vec::with_capacity(fits.len());
    let mut weighted_sum = T::zero();
    let mut var_tau = T::zero();
    for (((label, s), fit), &c) in sample.strata.iter().zip(&fits).zip(&sample.weights) {
        let sigma2 = sigma2_with(method, s, fit).map_err(|e| annotate(*label, e))?;
        per_stratum.push(sigma2);
        weighted_sum += c * c * sigma2;
        var_tau += c * c * sigma2 / T::of_count(s.n());
    }
    let report = VarianceReport::new(method, var_tau * T::of_count(sample.total), sample.total);
    Ok(StratifiedVariance { report, weighted_sum, per_stratum })
}
