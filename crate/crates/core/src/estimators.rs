//! Average treatment effect point estimators: difference in means, regression
//! adjustment, the leverage bias-corrected adjustment, the cross-fitted
//! (leave-one-out) adjustment and the exactly unbiased adjustment.
//!
//! Every estimator except the difference in means needs the within-arm OLS
//! fits. The `*_with` variants take precomputed [`ArmFits`] so callers that
//! evaluate several estimators on one sample fit each arm once.

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{OlsFit, Projection};
use crate::population::ObservedSample;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorId {
    Dif,
    Adj,
    Bc,
    Cf,
    Unbiased,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 5] =
        [EstimatorId::Dif, EstimatorId::Adj, EstimatorId::Bc, EstimatorId::Cf, EstimatorId::Unbiased];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorId::Dif => "dif",
            EstimatorId::Adj => "adj",
            EstimatorId::Bc => "bc",
            EstimatorId::Cf => "cf",
            EstimatorId::Unbiased => "unbiased",
        }
    }

    /// Whether the estimator needs within-arm regressions.
    pub fn uses_covariates(self) -> bool {
        self != EstimatorId::Dif
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorId::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator `{s}`")))
    }
}

/// A point estimate with its arm components: `tau_hat = mu1_hat - mu0_hat`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimate<T> {
    pub estimator: EstimatorId,
    pub tau_hat: T,
    pub mu1_hat: T,
    pub mu0_hat: T,
}

impl<T: Scalar> PointEstimate<T> {
    fn new(estimator: EstimatorId, mu1_hat: T, mu0_hat: T) -> Self {
        Self { estimator, tau_hat: mu1_hat - mu0_hat, mu1_hat, mu0_hat }
    }
}

/// One arm's regression of `Y` on `z` over that arm's units.
#[derive(Debug, Clone)]
pub struct ArmFit<T> {
    /// Sample indices of the arm's units, ascending; row `k` of the fit is unit `units[k]`.
    pub units: Vec<usize>,
    pub fit: OlsFit<T>,
}

impl<T: Scalar> ArmFit<T> {
    fn new(sample: &ObservedSample<T>, treated: bool) -> Result<Self> {
        let units = sample.assignment().arm(treated);
        let design = sample.design().select_rows(&units);
        let y = Array1::from_iter(units.iter().map(|&i| sample.y()[i]));
        let fit = Projection::new(design)?.fit(y.view())?;
        Ok(Self { units, fit })
    }

    pub fn size(&self) -> usize {
        self.units.len()
    }

    pub fn coefficients(&self) -> ndarray::ArrayView1<'_, T> {
        self.fit.coefficients()
    }
}

/// Treated and control fits for one sample.
#[derive(Debug, Clone)]
pub struct ArmFits<T> {
    pub treated: ArmFit<T>,
    pub control: ArmFit<T>,
    n: usize,
}

impl<T: Scalar> ArmFits<T> {
    /// Fits both arms; `SingularGram` when an arm has fewer than `p` units or
    /// collinear covariates.
    pub fn fit(sample: &ObservedSample<T>) -> Result<Self> {
        Ok(Self {
            treated: ArmFit::new(sample, true)?,
            control: ArmFit::new(sample, false)?,
            n: sample.n(),
        })
    }

    pub fn arm(&self, treated: bool) -> &ArmFit<T> {
        if treated {
            &self.treated
        } else {
            &self.control
        }
    }

    fn scatter(&self, f: impl Fn(&ArmFit<T>, usize) -> Result<T>) -> Result<Array1<T>> {
        let mut out = Array1::zeros(self.n);
        for arm in [&self.treated, &self.control] {
            for (k, &i) in arm.units.iter().enumerate() {
                out[i] = f(arm, k)?;
            }
        }
        Ok(out)
    }

    /// Within-arm residuals `e_hat_i`, indexed by sample unit.
    pub fn residuals(&self) -> Array1<T> {
        self.scatter(|a, k| Ok(a.fit.residuals()[k])).expect("infallible")
    }

    /// Within-arm leverages `P_{t,ii}`, indexed by sample unit.
    pub fn leverages(&self) -> Array1<T> {
        self.scatter(|a, k| Ok(a.fit.leverages()[k])).expect("infallible")
    }

    /// Leave-one-out residuals `e_hat_i / (1 - P_{t,ii})`, indexed by sample unit.
    pub fn loo_residuals(&self) -> Result<Array1<T>> {
        self.scatter(|a, k| a.fit.loo_residual(k).map_err(|e| remap_index(e, &a.units)))
    }
}

fn remap_index(err: Error, units: &[usize]) -> Error {
    match err {
        Error::LeverageOne { index } => Error::LeverageOne { index: units[index] },
        other => other,
    }
}

/// Arm mean in the inverse-probability form
/// `n^{-1} sum_i { (D_i / q) Y_i - (D_i / q - 1) m_i }`, where `D_i`
/// indicates membership of the arm, `q` is the arm share and `m_i` the
/// prediction for unit `i`.
fn arm_mean<T: Scalar>(sample: &ObservedSample<T>, treated: bool, prediction: impl Fn(usize) -> Result<T>) -> Result<T> {
    let n = T::of_count(sample.n());
    let share = if treated { sample.pi() } else { T::one() - sample.pi() };
    let mut total = T::zero();
    for (i, t) in sample.assignment().iter().enumerate() {
        let weight = if t == treated { T::one() / share } else { T::zero() };
        total += weight * sample.y()[i] - (weight - T::one()) * prediction(i)?;
    }
    Ok(total / n)
}

fn full_prediction<T: Scalar>(sample: &ObservedSample<T>, arm: &ArmFit<T>, i: usize) -> T {
    sample.design().row(i).dot(&arm.coefficients())
}

pub fn diff_in_means<T: Scalar>(sample: &ObservedSample<T>) -> Result<PointEstimate<T>> {
    let (n1, n0) = (sample.n1(), sample.n0());
    if n1 == 0 || n0 == 0 {
        return Err(Error::InvalidDesign("difference in means needs both arms".into()));
    }
    let (mut s1, mut s0) = (T::zero(), T::zero());
    for (y, t) in sample.y().iter().zip(sample.assignment().iter()) {
        if t {
            s1 += *y;
        } else {
            s0 += *y;
        }
    }
    Ok(PointEstimate::new(EstimatorId::Dif, s1 / T::of_count(n1), s0 / T::of_count(n0)))
}

pub fn adjusted<T: Scalar>(sample: &ObservedSample<T>) -> Result<PointEstimate<T>> {
    adjusted_with(sample, &ArmFits::fit(sample)?)
}

/// Regression adjustment with full within-arm coefficients.
pub fn adjusted_with<T: Scalar>(sample: &ObservedSample<T>, fits: &ArmFits<T>) -> Result<PointEstimate<T>> {
    let mu1 = arm_mean(sample, true, |i| Ok(full_prediction(sample, &fits.treated, i)))?;
    let mu0 = arm_mean(sample, false, |i| Ok(full_prediction(sample, &fits.control, i)))?;
    Ok(PointEstimate::new(EstimatorId::Adj, mu1, mu0))
}

pub fn bias_corrected<T: Scalar>(sample: &ObservedSample<T>) -> Result<PointEstimate<T>> {
    bias_corrected_with(sample, &ArmFits::fit(sample)?)
}

/// Adjusted arm means plus the leverage corrections `(n0/n1) Delta_1` and
/// `(n1/n0) Delta_0`, with `Delta_t` the arm average of `P_ii e_hat_i` using
/// full-sample leverages.
pub fn bias_corrected_with<T: Scalar>(sample: &ObservedSample<T>, fits: &ArmFits<T>) -> Result<PointEstimate<T>> {
    let adj = adjusted_with(sample, fits)?;
    let leverage = sample.projection().leverages();
    let delta = |arm: &ArmFit<T>| {
        let sum: T = arm.units.iter().zip(arm.fit.residuals()).map(|(&i, &e)| leverage[i] * e).sum();
        sum / T::of_count(arm.size())
    };
    let (n1, n0) = (T::of_count(sample.n1()), T::of_count(sample.n0()));
    let mu1 = adj.mu1_hat + n0 / n1 * delta(&fits.treated);
    let mu0 = adj.mu0_hat + n1 / n0 * delta(&fits.control);
    Ok(PointEstimate::new(EstimatorId::Bc, mu1, mu0))
}

pub fn cross_fitted<T: Scalar>(sample: &ObservedSample<T>) -> Result<PointEstimate<T>> {
    cross_fitted_with(sample, &ArmFits::fit(sample)?)
}

/// Regression adjustment where each unit's own-arm prediction uses the
/// coefficients fitted without that unit, through the leave-one-out identity.
/// Units of the other arm do not enter that arm's fit, so their predictions
/// use the full arm coefficients.
pub fn cross_fitted_with<T: Scalar>(sample: &ObservedSample<T>, fits: &ArmFits<T>) -> Result<PointEstimate<T>> {
    let mut position = vec![0usize; sample.n()];
    for arm in [&fits.treated, &fits.control] {
        for (k, &i) in arm.units.iter().enumerate() {
            position[i] = k;
        }
    }
    let predict = |arm: &ArmFit<T>, treated: bool, i: usize| -> Result<T> {
        if sample.assignment().is_treated(i) == treated {
            arm.fit.loo_prediction(position[i]).map_err(|e| remap_index(e, &arm.units))
        } else {
            Ok(full_prediction(sample, arm, i))
        }
    };
    let mu1 = arm_mean(sample, true, |i| predict(&fits.treated, true, i))?;
    let mu0 = arm_mean(sample, false, |i| predict(&fits.control, false, i))?;
    Ok(PointEstimate::new(EstimatorId::Cf, mu1, mu0))
}

pub fn unbiased<T: Scalar>(sample: &ObservedSample<T>) -> Result<PointEstimate<T>> {
    unbiased_with(sample, &ArmFits::fit(sample)?)
}

/// The four exact-bias corrections of the adjusted estimator, in the order
/// `[b_1^(1), b_1^(2) estimate, b_0^(1), b_0^(2) estimate]`.
pub fn unbiased_corrections<T: Scalar>(sample: &ObservedSample<T>, fits: &ArmFits<T>) -> Result<[T; 4]> {
    let n = sample.n();
    let nf = T::of_count(n);
    let projection = sample.projection();
    let design = sample.design();
    let zbar = design.mean_row();
    let leverage = projection.leverages();

    // Per arm: (b^(1), b^(2) estimate) with the arm's sign convention.
    let corrections = |arm: &ArmFit<T>, sign: T, other: usize| -> (T, T) {
        let nt = T::of_count(arm.size());
        let no = T::of_count(other);
        let p = design.cols();
        let mut zbar_t = Array1::<T>::zeros(p);
        let mut s_t = Array1::<T>::zeros(p);
        let mut own = T::zero();
        for &i in &arm.units {
            let y = sample.y()[i];
            zbar_t += &design.row(i);
            s_t.scaled_add(y, &design.row(i));
            own += nf * leverage[i] * y;
        }
        zbar_t /= nt;
        s_t /= nt;
        // Sigma^{-1} s_t with Sigma = Z'Z / n.
        let sigma_inv_s = projection.factor().solve(s_t.view()) * nf;
        let gap = &zbar_t - &zbar;
        let b1 = -sign * gap.dot(&(&arm.coefficients() - &sigma_inv_s));
        let cross = nf * zbar.dot(&sigma_inv_s) * nt - own;
        let b2 = -sign * no / (nt * nt * nf) * own + sign * no / (nt * nt * (nf - T::one()) * nf) * cross;
        (b1, b2)
    };
    let (b11, b12) = corrections(&fits.treated, T::one(), sample.n0());
    let (b01, b02) = corrections(&fits.control, -T::one(), sample.n1());
    Ok([b11, b12, b01, b02])
}

/// Adjusted estimator minus its observable and estimated exact-bias terms;
/// its mean over all assignments equals the true effect.
pub fn unbiased_with<T: Scalar>(sample: &ObservedSample<T>, fits: &ArmFits<T>) -> Result<PointEstimate<T>> {
    let adj = adjusted_with(sample, fits)?;
    let [b11, b12, b01, b02] = unbiased_corrections(sample, fits)?;
    Ok(PointEstimate::new(EstimatorId::Unbiased, adj.mu1_hat - b11 - b12, adj.mu0_hat + b01 + b02))
}

/// Evaluates `id`, reusing `fits` when the estimator needs them.
pub fn estimate<T: Scalar>(id: EstimatorId, sample: &ObservedSample<T>, fits: &ArmFits<T>) -> Result<PointEstimate<T>> {
    match id {
        EstimatorId::Dif => diff_in_means(sample),
        EstimatorId::Adj => adjusted_with(sample, fits),
        EstimatorId::Bc => bias_corrected_with(sample, fits),
        EstimatorId::Cf => cross_fitted_with(sample, fits),
        EstimatorId::Unbiased => unbiased_with(sample, fits),
    }
}
