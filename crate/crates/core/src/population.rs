//! Finite populations of potential outcomes, treatment assignments drawn
//! without replacement, exhaustive assignment enumeration, and observed samples.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{DesignMatrix, Projection};
use crate::scalar::Scalar;

/// Default cap on the number of assignments `enumerate_assignments` will visit.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Subtracts each column's mean in place.
pub fn center_columns<T: Scalar>(x: &mut Array2<T>) {
    if x.nrows() == 0 {
        return;
    }
    let n = T::of_count(x.nrows());
    for mut col in x.columns_mut() {
        let mean = col.sum() / n;
        col.mapv_inplace(|v| v - mean);
    }
}

/// Fixed table of potential outcomes with centered covariates.
#[derive(Debug, Clone)]
pub struct FinitePopulation<T> {
    y1: Array1<T>,
    y0: Array1<T>,
    x: Array2<T>,
    n1: usize,
}

impl<T: Scalar> FinitePopulation<T> {
    /// Builds a population; covariates are centered here once and for all.
    pub fn new(y1: Array1<T>, y0: Array1<T>, mut x: Array2<T>, n1: usize) -> Result<Self> {
        let n = y1.len();
        if y0.len() != n || x.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "y1 has {n} entries, y0 has {}, covariates have {} rows",
                y0.len(),
                x.nrows()
            )));
        }
        check_counts(n, n1)?;
        center_columns(&mut x);
        Ok(Self { y1, y0, x, n1 })
    }

    pub fn n(&self) -> usize {
        self.y1.len()
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n0(&self) -> usize {
        self.n() - self.n1
    }

    /// Number of regressors including the intercept.
    pub fn p(&self) -> usize {
        self.x.ncols() + 1
    }

    pub fn y1(&self) -> ArrayView1<'_, T> {
        self.y1.view()
    }

    pub fn y0(&self) -> ArrayView1<'_, T> {
        self.y0.view()
    }

    pub fn covariates(&self) -> ArrayView2<'_, T> {
        self.x.view()
    }

    /// `pi = n1 / n`.
    pub fn pi(&self) -> T {
        T::of_count(self.n1) / T::of_count(self.n())
    }

    /// Average treatment effect `mean(y1 - y0)`.
    pub fn tau(&self) -> T {
        (&self.y1 - &self.y0).sum() / T::of_count(self.n())
    }

    pub fn design(&self) -> DesignMatrix<T> {
        DesignMatrix::from_covariates(self.x.view())
    }

    /// Full-population projection `P = Z (Z'Z)^{-1} Z'`.
    pub fn projection(&self) -> Result<Projection<T>> {
        Projection::new(self.design())
    }

    /// Observed sample under `assignment`, sharing the given full-design projection.
    pub fn observe(&self, assignment: &Assignment, projection: Arc<Projection<T>>) -> Result<ObservedSample<T>> {
        if assignment.len() != self.n() || assignment.n1() != self.n1 {
            return Err(Error::DimensionMismatch(format!(
                "assignment has {} units and {} treated; population has {} and {}",
                assignment.len(),
                assignment.n1(),
                self.n(),
                self.n1
            )));
        }
        let y = Array1::from_iter(
            assignment.iter().enumerate().map(|(i, t)| if t { self.y1[i] } else { self.y0[i] }),
        );
        ObservedSample::with_projection(y, assignment.clone(), projection)
    }

    /// Replaces both potential-outcome vectors, keeping covariates and `n1`.
    pub fn with_outcomes(&self, y1: Array1<T>, y0: Array1<T>) -> Result<Self> {
        if y1.len() != self.n() || y0.len() != self.n() {
            return Err(Error::DimensionMismatch("outcome length differs from population size".into()));
        }
        Ok(Self { y1, y0, x: self.x.clone(), n1: self.n1 })
    }
}

fn check_counts(n: usize, n1: usize) -> Result<()> {
    if n < 2 || n1 == 0 || n1 >= n {
        return Err(Error::InvalidDesign(format!(
            "need n >= 2 and 1 <= n1 <= n - 1, got n = {n}, n1 = {n1}"
        )));
    }
    Ok(())
}

/// Binary treatment vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    treated: Vec<bool>,
    n1: usize,
}

impl Assignment {
    pub fn new(treated: Vec<bool>) -> Self {
        let n1 = treated.iter().filter(|&&t| t).count();
        Self { treated, n1 }
    }

    pub fn from_treated_indices(n: usize, indices: &[usize]) -> Self {
        let mut treated = vec![false; n];
        for &i in indices {
            treated[i] = true;
        }
        Self::new(treated)
    }

    pub fn len(&self) -> usize {
        self.treated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.treated.is_empty()
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n0(&self) -> usize {
        self.len() - self.n1
    }

    pub fn is_treated(&self, i: usize) -> bool {
        self.treated[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.treated.iter().copied()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.treated
    }

    /// Indices of units in arm `treated`, ascending.
    pub fn arm(&self, treated: bool) -> Vec<usize> {
        self.iter().enumerate().filter(|&(_, t)| t == treated).map(|(i, _)| i).collect()
    }
}

/// Draws `n1` of `n` units without replacement.
///
/// Partial Fisher-Yates: for `k = 0..n1`, draw `j` uniformly from `k..n`
/// and swap positions `k` and `j`; the first `n1` positions are treated.
/// Exactly `n1` uniform draws are consumed, in that order.
pub fn sample_assignment<R: Rng + ?Sized>(n: usize, n1: usize, rng: &mut R) -> Result<Assignment> {
    check_counts(n, n1)?;
    let mut order: Vec<usize> = (0..n).collect();
    for k in 0..n1 {
        let j = rng.random_range(k..n);
        order.swap(k, j);
    }
    Ok(Assignment::from_treated_indices(n, &order[..n1]))
}

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(u128::from(n - i)) {
            Some(v) => v / u128::from(i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Iterator over all `C(n, n1)` assignments, with treated index sets in
/// lexicographic order starting from `{0, .., n1 - 1}`.
#[derive(Debug, Clone)]
pub struct Assignments {
    n: usize,
    indices: Vec<usize>,
    done: bool,
}

impl Iterator for Assignments {
    type Item = Assignment;

    fn next(&mut self) -> Option<Assignment> {
        if self.done {
            return None;
        }
        let current = Assignment::from_treated_indices(self.n, &self.indices);
        let k = self.indices.len();
        match (0..k).rev().find(|&i| self.indices[i] < self.n - k + i) {
            Some(i) => {
                self.indices[i] += 1;
                for j in i + 1..k {
                    self.indices[j] = self.indices[j - 1] + 1;
                }
            }
            None => self.done = true,
        }
        Some(current)
    }
}

/// Enumerates every assignment of `n1` treated among `n`, refusing when
/// `C(n, n1)` exceeds `cap`.
pub fn enumerate_assignments(n: usize, n1: usize, cap: u128) -> Result<Assignments> {
    if n1 > n {
        return Err(Error::InvalidDesign(format!("n1 = {n1} exceeds n = {n}")));
    }
    let count = binomial(n as u64, n1 as u64);
    if count > cap {
        return Err(Error::TooLarge { count, cap });
    }
    Ok(Assignments { n, indices: (0..n1).collect(), done: false })
}

/// Residuals `e(t) = y(t) - Z beta_t` from the full-population regressions.
pub fn population_residuals<T: Scalar>(pop: &FinitePopulation<T>) -> Result<(Array1<T>, Array1<T>)> {
    let projection = pop.projection()?;
    residuals_with(pop, &projection)
}

pub(crate) fn residuals_with<T: Scalar>(
    pop: &FinitePopulation<T>,
    projection: &Projection<T>,
) -> Result<(Array1<T>, Array1<T>)> {
    let (_, e1) = projection.regress(pop.y1())?;
    let (_, e0) = projection.regress(pop.y0())?;
    Ok((e1, e0))
}

/// Finite-sample versions of the regularity quantities: reported, never enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationDiagnostics<T> {
    /// Maximum full-population leverage.
    pub kappa: T,
    /// `max_t n^{-1} sum_i e_i(t)^2`.
    pub e2: T,
    /// `max_{t,i} |e_i(t)|`.
    pub e_inf: T,
    /// Correlation of `e(1)` and `e(0)`; `None` when either vector is zero.
    pub residual_correlation: Option<T>,
}

pub fn diagnostics<T: Scalar>(pop: &FinitePopulation<T>) -> Result<PopulationDiagnostics<T>> {
    let projection = pop.projection()?;
    let (e1, e0) = residuals_with(pop, &projection)?;
    let n = T::of_count(pop.n());
    let ss1 = e1.dot(&e1);
    let ss0 = e0.dot(&e0);
    let e_inf = e1.iter().chain(e0.iter()).fold(T::zero(), |m, v| m.max(v.abs()));
    let residual_correlation = if ss1 > T::zero() && ss0 > T::zero() {
        let r = e1.dot(&e0) / (ss1 * ss0).sqrt();
        Some(r.max(-T::one()).min(T::one()))
    } else {
        None
    };
    Ok(PopulationDiagnostics {
        kappa: projection.kappa(),
        e2: ss1.max(ss0) / n,
        e_inf,
        residual_correlation,
    })
}

/// What an analyst observes: outcomes, assignment, covariates (through the
/// full-sample design) and optional stratum labels.
#[derive(Debug, Clone)]
pub struct ObservedSample<T> {
    y: Array1<T>,
    assignment: Assignment,
    projection: Arc<Projection<T>>,
    strata: Option<Vec<i64>>,
}

impl<T: Scalar> ObservedSample<T> {
    /// Centers `x`, builds the full-sample projection and validates arm sizes.
    pub fn new(y: Array1<T>, assignment: Assignment, mut x: Array2<T>) -> Result<Self> {
        center_columns(&mut x);
        let projection = Projection::new(DesignMatrix::from_covariates(x.view()))?;
        Self::with_projection(y, assignment, Arc::new(projection))
    }

    /// Sample reusing an existing full-sample projection.
    pub fn with_projection(y: Array1<T>, assignment: Assignment, projection: Arc<Projection<T>>) -> Result<Self> {
        if y.len() != assignment.len() || projection.rows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "outcome has {} entries, assignment {}, design {} rows",
                y.len(),
                assignment.len(),
                projection.rows()
            )));
        }
        check_counts(y.len(), assignment.n1())?;
        Ok(Self { y, assignment, projection, strata: None })
    }

    /// Attaches stratum labels; every stratum must contain both arms.
    pub fn with_strata(mut self, strata: Vec<i64>) -> Result<Self> {
        if strata.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} stratum labels for {} units",
                strata.len(),
                self.n()
            )));
        }
        let mut counts: std::collections::BTreeMap<i64, (usize, usize)> = Default::default();
        for (&s, t) in strata.iter().zip(self.assignment.iter()) {
            let c = counts.entry(s).or_default();
            if t {
                c.0 += 1;
            } else {
                c.1 += 1;
            }
        }
        if let Some((s, _)) = counts.iter().find(|(_, &(a, b))| a == 0 || b == 0) {
            return Err(Error::InvalidDesign(format!("stratum {s} lacks a treated or a control unit")));
        }
        self.strata = Some(strata);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n1(&self) -> usize {
        self.assignment.n1()
    }

    pub fn n0(&self) -> usize {
        self.assignment.n0()
    }

    /// Regressors including the intercept.
    pub fn p(&self) -> usize {
        self.projection.cols()
    }

    pub fn pi(&self) -> T {
        T::of_count(self.n1()) / T::of_count(self.n())
    }

    pub fn y(&self) -> ArrayView1<'_, T> {
        self.y.view()
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    pub fn design(&self) -> &DesignMatrix<T> {
        self.projection.design()
    }

    /// Full-sample projection over all `n` units.
    pub fn projection(&self) -> &Projection<T> {
        &self.projection
    }

    pub fn shared_projection(&self) -> Arc<Projection<T>> {
        Arc::clone(&self.projection)
    }

    pub fn strata(&self) -> Option<&[i64]> {
        self.strata.as_deref()
    }

    /// The same outcomes and assignment with covariates dropped.
    pub fn intercept_only(&self) -> Result<Self> {
        let projection = Projection::new(DesignMatrix::intercept_only(self.n()))?;
        Self::with_projection(self.y.clone(), self.assignment.clone(), Arc::new(projection))
    }

    /// Sub-sample over `rows`, re-centering its covariates.
    pub fn subsample(&self, rows: &[usize]) -> Result<Self> {
        let z = self.design().view().select(Axis(0), rows);
        let mut x = z.slice(ndarray::s![.., 1..]).to_owned();
        center_columns(&mut x);
        let y = Array1::from_iter(rows.iter().map(|&i| self.y[i]));
        let assignment = Assignment::new(rows.iter().map(|&i| self.assignment.is_treated(i)).collect());
        let projection = Projection::new(DesignMatrix::from_covariates(x.view()))?;
        Self::with_projection(y, assignment, Arc::new(projection))
    }
}
