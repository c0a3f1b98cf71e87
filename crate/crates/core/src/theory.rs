//! Population-level quantities from the stochastic expansion of the adjusted
//! estimators. They need both potential outcomes, so they are only available
//! when the full table is known (simulations and oracles).
//!
//! With `u_i = T_i/pi - 1`, `v_i = (1-T_i)/(1-pi) - 1` and `e_i(t)` the
//! full-population residuals:
//!
//! * linear term `L = n^{-1} sum_i u_i (e_i(1) + pi/(1-pi) e_i(0))`,
//! * quadratic term `W = n^{-2} sum_{i<j} W_ij` with
//!   `W_ij = -u_i u_j n P_ij (e_i(1)+e_j(1)) + v_i v_j n P_ij (e_i(0)+e_j(0))`,
//! * `sigma_L^2 = Var(sqrt(n) L)` (exact) and the closed form for
//!   `sigma_W^2 = Var(sqrt(n) W)` (asymptotic).

use ndarray::{Array1, ArrayView1};

use crate::error::Result;
use crate::linalg::{GramFactor, Projection};
use crate::population::{residuals_with, Assignment, FinitePopulation};
use crate::scalar::Scalar;

/// Population residuals together with the projection they came from.
#[derive(Debug, Clone)]
pub struct ResidualTable<T> {
    pub projection: Projection<T>,
    pub e1: Array1<T>,
    pub e0: Array1<T>,
}

impl<T: Scalar> ResidualTable<T> {
    pub fn new(pop: &FinitePopulation<T>) -> Result<Self> {
        let projection = pop.projection()?;
        let (e1, e0) = residuals_with(pop, &projection)?;
        Ok(Self { projection, e1, e0 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoreticalVariance<T> {
    pub sigma_l2: T,
    pub sigma_w2: T,
    /// `rho_i = -e_i(1) + (pi/(1-pi))^2 e_i(0)`.
    pub rho: Array1<T>,
}

struct Shares<T> {
    n: T,
    n1: T,
    n0: T,
    odds: T,
}

fn shares<T: Scalar>(pop: &FinitePopulation<T>) -> Shares<T> {
    let n1 = T::of_count(pop.n1());
    let n0 = T::of_count(pop.n0());
    Shares { n: n1 + n0, n1, n0, odds: n1 / n0 }
}

fn sigma_l2_from<T: Scalar>(pop: &FinitePopulation<T>, e1: ArrayView1<'_, T>, e0: ArrayView1<'_, T>) -> T {
    let Shares { n, n1, n0, .. } = shares(pop);
    let nm1 = n - T::one();
    let diff = &e1 - &e0;
    n / (n1 * nm1) * e1.dot(&e1) + n / (n0 * nm1) * e0.dot(&e0) - diff.dot(&diff) / nm1
}

/// `sigma_L^2 = n/(n1(n-1)) sum e(1)^2 + n/(n0(n-1)) sum e(0)^2 - (n-1)^{-1} sum (e(1)-e(0))^2`.
pub fn sigma_l2<T: Scalar>(pop: &FinitePopulation<T>) -> Result<T> {
    let r = ResidualTable::new(pop)?;
    Ok(sigma_l2_from(pop, r.e1.view(), r.e0.view()))
}

pub fn rho<T: Scalar>(pop: &FinitePopulation<T>, e1: ArrayView1<'_, T>, e0: ArrayView1<'_, T>) -> Array1<T> {
    let odds = shares(pop).odds;
    let w = odds * odds;
    Array1::from_iter(e1.iter().zip(e0.iter()).map(|(&a, &b)| -a + w * b))
}

fn sigma_w2_from<T: Scalar>(pop: &FinitePopulation<T>, table: &ResidualTable<T>) -> (T, Array1<T>) {
    let Shares { n, n1, n0, .. } = shares(pop);
    let h = table.projection.leverages();
    let (e1, e0) = (&table.e1, &table.e0);
    let mut d11 = T::zero();
    let mut d00 = T::zero();
    let mut d10 = T::zero();
    for i in 0..e1.len() {
        d11 += h[i] * e1[i] * e1[i];
        d00 += h[i] * e0[i] * e0[i];
        d10 += h[i] * e1[i] * e0[i];
    }
    let rho = rho(pop, e1.view(), e0.view());
    let off = table.projection.offdiag_squared_hat_form(rho.view(), rho.view());
    let c1 = n0 * n0 / (n1 * n1 * n);
    let value = c1 * d11 + n1 * n1 / (n0 * n0 * n) * d00 - T::of(2.0) / n * d10 + c1 * off;
    (value, rho)
}

/// The four-term closed form for `sigma_W^2`.
pub fn sigma_w2<T: Scalar>(pop: &FinitePopulation<T>) -> Result<T> {
    let table = ResidualTable::new(pop)?;
    Ok(sigma_w2_from(pop, &table).0)
}

pub fn theoretical_variance<T: Scalar>(pop: &FinitePopulation<T>) -> Result<TheoreticalVariance<T>> {
    let table = ResidualTable::new(pop)?;
    Ok(theoretical_variance_with(pop, &table))
}

pub fn theoretical_variance_with<T: Scalar>(pop: &FinitePopulation<T>, table: &ResidualTable<T>) -> TheoreticalVariance<T> {
    let sigma_l2 = sigma_l2_from(pop, table.e1.view(), table.e0.view());
    let (sigma_w2, rho) = sigma_w2_from(pop, table);
    TheoreticalVariance { sigma_l2, sigma_w2, rho }
}

fn weights<T: Scalar>(pop: &FinitePopulation<T>, a: &Assignment) -> (Array1<T>, Array1<T>) {
    let pi = pop.pi();
    let u = Array1::from_iter(a.iter().map(|t| if t { T::one() / pi - T::one() } else { -T::one() }));
    let v = Array1::from_iter(a.iter().map(|t| if t { -T::one() } else { T::one() / (T::one() - pi) - T::one() }));
    (u, v)
}

/// The linear term `L` for one assignment.
pub fn linear_term<T: Scalar>(pop: &FinitePopulation<T>, table: &ResidualTable<T>, a: &Assignment) -> T {
    let (u, _) = weights(pop, a);
    let odds = shares(pop).odds;
    let c = &table.e1 + &(&table.e0 * odds);
    u.dot(&c) / T::of_count(pop.n())
}

/// The quadratic term `W = n^{-2} sum_{i<j} W_ij` for one assignment, in
/// `O(np)`: `sum_{i != j} w_i w_j P_ij (e_i + e_j) = 2 (sum_i w_i e_i (P w)_i - sum_i w_i^2 e_i P_ii)`.
pub fn quadratic_term<T: Scalar>(pop: &FinitePopulation<T>, table: &ResidualTable<T>, a: &Assignment) -> T {
    let (u, v) = weights(pop, a);
    let h = table.projection.leverages();
    let pair_sum = |w: &Array1<T>, e: &Array1<T>| -> T {
        let pw = table.projection.project(w.view());
        let mut s = T::zero();
        for i in 0..w.len() {
            s += w[i] * e[i] * (pw[i] - w[i] * h[i]);
        }
        s
    };
    let n = T::of_count(pop.n());
    // sum_{i<j} = half of the ordered sum; each W_ij carries a factor n
    (-pair_sum(&u, &table.e1) + pair_sum(&v, &table.e0)) * n / (n * n)
}

/// Leading bias terms `(B_adj, B_bc)` of the adjusted and bias-corrected
/// estimators under assignment `a`. The cross-fitted estimator has none.
pub fn bias_terms<T: Scalar>(pop: &FinitePopulation<T>, table: &ResidualTable<T>, a: &Assignment) -> Result<(T, T)> {
    let (u, v) = weights(pop, a);
    let Shares { n, n1, n0, .. } = shares(pop);
    let h = table.projection.leverages();
    let design = table.projection.design();
    let pi = pop.pi();

    let mut b_adj = T::zero();
    let mut b_bc = T::zero();
    for i in 0..pop.n() {
        b_adj += -u[i] * u[i] * h[i] * table.e1[i] + v[i] * v[i] * h[i] * table.e0[i];
        let t = if a.is_treated(i) { T::one() } else { T::zero() };
        b_bc += -(u[i] * u[i] - n0 / n1 * t / pi) * h[i] * table.e1[i]
            + (v[i] * v[i] - n1 / n0 * (T::one() - t) / (T::one() - pi)) * h[i] * table.e0[i];
    }
    b_adj /= n;
    b_bc /= n;

    // (n_t^{-1} sum P_ii z_i)' (n_t^{-1} sum z z')^{-1} (n_t^{-1} sum z_i e_i(t)) over arm t
    let cross = |treated: bool, e: &Array1<T>| -> Result<T> {
        let units = a.arm(treated);
        let sub = design.select_rows(&units);
        let factor = GramFactor::factor(sub.gram().view())?;
        let p = design.cols();
        let mut lev = Array1::<T>::zeros(p);
        let mut ze = Array1::<T>::zeros(p);
        for &i in &units {
            lev.scaled_add(h[i], &design.row(i));
            ze.scaled_add(e[i], &design.row(i));
        }
        let nt = T::of_count(units.len());
        // (lev/nt)' (G/nt)^{-1} (ze/nt) = lev' G^{-1} ze / nt
        Ok(lev.dot(&factor.solve(ze.view())) / nt)
    };
    b_bc += -n0 / n1 * cross(true, &table.e1)? + n1 / n0 * cross(false, &table.e0)?;
    Ok((b_adj, b_bc))
}

/// Large-sample approximations of `E[sigma2_HC0]` and `E[sigma2_HC3]`,
/// returned as `(hc0, hc3)`.
pub fn hc_expectations<T: Scalar>(pop: &FinitePopulation<T>, table: &ResidualTable<T>) -> (T, T) {
    let Shares { n, n1, n0, .. } = shares(pop);
    let h = table.projection.leverages();
    let (e1, e0) = (&table.e1, &table.e0);
    let nm1 = n - T::one();
    let base = n / (n1 * nm1) * e1.dot(e1) + n / (n0 * nm1) * e0.dot(e0);
    let mut second = T::zero();
    for i in 0..e1.len() {
        second += n0 / (n1 * n1) * h[i] * e1[i] * e1[i] + n1 / (n0 * n0) * h[i] * e0[i] * e0[i];
    }
    (base - second, base + second)
}
