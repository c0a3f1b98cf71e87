//! Independent reference implementations. Nothing here calls into the
//! library's linear algebra: solves use textbook Gaussian elimination and hat
//! matrices are materialized explicitly.
#![allow(dead_code)]

use designbench::{Assignment, FinitePopulation, ObservedSample};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.sample(StandardNormal))
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, k), |_| rng.sample(StandardNormal))
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Array1<f64> {
    let n = a.nrows();
    let mut m = a.to_owned();
    let mut rhs = b.to_owned();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs())).unwrap();
        assert!(m[[pivot, col]].abs() > 1e-13, "oracle hit a singular system");
        if pivot != col {
            for k in 0..n {
                m.swap([col, k], [pivot, k]);
            }
            rhs.swap(col, pivot);
        }
        for row in col + 1..n {
            let f = m[[row, col]] / m[[col, col]];
            for k in col..n {
                m[[row, k]] -= f * m[[col, k]];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| m[[row, k]] * x[k]).sum();
        x[row] = (rhs[row] - tail) / m[[row, row]];
    }
    x
}

pub fn gauss_inverse(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut inv = Array2::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::zeros(n);
        e[j] = 1.0;
        inv.column_mut(j).assign(&gauss_solve(a, e.view()));
    }
    inv
}

/// `[1, X]`.
pub fn with_intercept(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut z = Array2::ones((x.nrows(), x.ncols() + 1));
    z.slice_mut(s![.., 1..]).assign(&x);
    z
}

pub fn centered(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let means = x.mean_axis(Axis(0)).unwrap();
    &x - &means
}

/// OLS coefficients through the normal equations.
pub fn ols(z: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Array1<f64> {
    gauss_solve(z.t().dot(&z).view(), z.t().dot(&y).view())
}

pub fn residuals(z: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Array1<f64> {
    &y - &z.dot(&ols(z, y))
}

/// Explicit `Z (Z'Z)^{-1} Z'`.
pub fn hat_matrix(z: ArrayView2<'_, f64>) -> Array2<f64> {
    z.dot(&gauss_inverse(z.t().dot(&z).view())).dot(&z.t())
}

pub fn drop_row(z: ArrayView2<'_, f64>, i: usize) -> Array2<f64> {
    let keep: Vec<usize> = (0..z.nrows()).filter(|&k| k != i).collect();
    z.select(Axis(0), &keep)
}

pub fn drop_entry(y: ArrayView1<'_, f64>, i: usize) -> Array1<f64> {
    let keep: Vec<usize> = (0..y.len()).filter(|&k| k != i).collect();
    y.select(Axis(0), &keep)
}

/// Coefficients refitted without row `i`.
pub fn deletion_refit(z: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, i: usize) -> Array1<f64> {
    ols(drop_row(z, i).view(), drop_entry(y, i).view())
}

/// Everything an estimator oracle needs about one sample.
#[derive(Debug, Clone)]
pub struct Raw {
    pub y: Array1<f64>,
    pub t: Vec<bool>,
    /// Centered covariates.
    pub x: Array2<f64>,
}

impl Raw {
    pub fn new(y: Array1<f64>, t: Vec<bool>, x: ArrayView2<'_, f64>) -> Self {
        Self { y, t, x: centered(x) }
    }

    pub fn from_sample(s: &ObservedSample<f64>) -> Self {
        let z = s.design().view();
        Self { y: s.y().to_owned(), t: s.assignment().as_slice().to_vec(), x: z.slice(s![.., 1..]).to_owned() }
    }

    pub fn sample(&self) -> ObservedSample<f64> {
        ObservedSample::new(self.y.clone(), Assignment::new(self.t.clone()), self.x.clone()).unwrap()
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n1(&self) -> usize {
        self.t.iter().filter(|&&t| t).count()
    }

    pub fn z(&self) -> Array2<f64> {
        with_intercept(self.x.view())
    }

    pub fn arm(&self, treated: bool) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.t[i] == treated).collect()
    }

    pub fn arm_design(&self, treated: bool) -> Array2<f64> {
        self.z().select(Axis(0), &self.arm(treated))
    }

    pub fn arm_y(&self, treated: bool) -> Array1<f64> {
        self.y.select(Axis(0), &self.arm(treated))
    }

    pub fn arm_coef(&self, treated: bool) -> Array1<f64> {
        ols(self.arm_design(treated).view(), self.arm_y(treated).view())
    }

    /// Within-arm residuals scattered back to unit order.
    pub fn arm_residuals(&self) -> Array1<f64> {
        let mut out = Array1::zeros(self.n());
        for t in [true, false] {
            let e = residuals(self.arm_design(t).view(), self.arm_y(t).view());
            for (k, &i) in self.arm(t).iter().enumerate() {
                out[i] = e[k];
            }
        }
        out
    }

    /// Within-arm leverages scattered back to unit order.
    pub fn arm_leverages(&self) -> Array1<f64> {
        let mut out = Array1::zeros(self.n());
        for t in [true, false] {
            let h = hat_matrix(self.arm_design(t).view());
            for (k, &i) in self.arm(t).iter().enumerate() {
                out[i] = h[[k, k]];
            }
        }
        out
    }

    /// `y_i` minus its prediction from the arm fit without unit `i`.
    pub fn deletion_loo_residuals(&self) -> Array1<f64> {
        let mut out = Array1::zeros(self.n());
        for t in [true, false] {
            let zt = self.arm_design(t);
            let yt = self.arm_y(t);
            for (k, &i) in self.arm(t).iter().enumerate() {
                let beta = deletion_refit(zt.view(), yt.view(), k);
                out[i] = yt[k] - zt.row(k).dot(&beta);
            }
        }
        out
    }
}

/// Difference in means.
pub fn dif_oracle(r: &Raw) -> f64 {
    r.arm_y(true).mean().unwrap() - r.arm_y(false).mean().unwrap()
}

/// Coefficient on `T` in the OLS of `Y` on `(1, T, x - xbar, T (x - xbar))`.
pub fn interacted_ols(r: &Raw) -> f64 {
    let (n, k) = r.x.dim();
    let mut z = Array2::zeros((n, 2 + 2 * k));
    for i in 0..n {
        let t = if r.t[i] { 1.0 } else { 0.0 };
        z[[i, 0]] = 1.0;
        z[[i, 1]] = t;
        for j in 0..k {
            z[[i, 2 + j]] = r.x[[i, j]];
            z[[i, 2 + k + j]] = t * r.x[[i, j]];
        }
    }
    ols(z.view(), r.y.view())[1]
}

/// The inverse-probability form `n^{-1} sum (D/q) Y - (D/q - 1) m` for arm `treated`.
fn ipw_mean(r: &Raw, treated: bool, m: &Array1<f64>) -> f64 {
    let n = r.n() as f64;
    let q = if treated { r.n1() as f64 / n } else { 1.0 - r.n1() as f64 / n };
    (0..r.n())
        .map(|i| {
            let d = if r.t[i] == treated { 1.0 / q } else { 0.0 };
            d * r.y[i] - (d - 1.0) * m[i]
        })
        .sum::<f64>()
        / n
}

pub fn adj_oracle(r: &Raw) -> f64 {
    let z = r.z();
    let m1 = z.dot(&r.arm_coef(true));
    let m0 = z.dot(&r.arm_coef(false));
    ipw_mean(r, true, &m1) - ipw_mean(r, false, &m0)
}

/// Bias-corrected estimator with the explicit full-sample hat diagonal.
pub fn bc_oracle(r: &Raw) -> f64 {
    let p = hat_matrix(r.z().view());
    let e = r.arm_residuals();
    let n1 = r.n1() as f64;
    let n0 = r.n() as f64 - n1;
    let delta = |t: bool| r.arm(t).iter().map(|&i| p[[i, i]] * e[i]).sum::<f64>() / if t { n1 } else { n0 };
    adj_oracle(r) + n0 / n1 * delta(true) - n1 / n0 * delta(false)
}

/// Cross-fitted estimator with every leave-one-out coefficient refitted by deletion.
pub fn cf_oracle(r: &Raw) -> f64 {
    let z = r.z();
    let mut means = [0.0; 2];
    for (slot, t) in [true, false].into_iter().enumerate() {
        let zt = r.arm_design(t);
        let yt = r.arm_y(t);
        let full = r.arm_coef(t);
        let mut m = z.dot(&full);
        for (k, &i) in r.arm(t).iter().enumerate() {
            m[i] = z.row(i).dot(&deletion_refit(zt.view(), yt.view(), k));
        }
        means[slot] = ipw_mean(r, t, &m);
    }
    means[0] - means[1]
}

/// Transcription of the exactly unbiased estimator with explicit
/// `Sigma = Z'Z / n`, `Sigma_t` and double sums over `j != i`.
pub fn unbiased_oracle(r: &Raw) -> f64 {
    let n = r.n();
    let nf = n as f64;
    let n1 = r.n1() as f64;
    let n0 = nf - n1;
    let pi = n1 / nf;
    let z = r.z();
    let sigma_inv = gauss_inverse((z.t().dot(&z) / nf).view());
    let arm_terms = |t: bool| -> (f64, f64) {
        let nt = if t { n1 } else { n0 };
        let no = nf - nt;
        let q = if t { pi } else { 1.0 - pi };
        let units = r.arm(t);
        let zt = r.arm_design(t);
        let sigma_t_inv = gauss_inverse((zt.t().dot(&zt) / nt).view());
        let mut s = Array1::zeros(z.ncols());
        for &i in &units {
            s.scaled_add(r.y[i] / nt, &z.row(i));
        }
        let mut weighted = Array1::zeros(z.ncols());
        for i in 0..n {
            let d = if r.t[i] == t { 1.0 / q } else { 0.0 };
            weighted.scaled_add((d - 1.0) / nf, &z.row(i));
        }
        let b1 = -weighted.dot(&(&sigma_t_inv - &sigma_inv).dot(&s));
        let own: f64 = units.iter().map(|&i| z.row(i).dot(&sigma_inv.dot(&z.row(i))) * r.y[i]).sum();
        let mut cross = 0.0;
        for i in 0..n {
            for &j in &units {
                if j != i {
                    cross += z.row(i).dot(&sigma_inv.dot(&z.row(j))) * r.y[j];
                }
            }
        }
        let b2 = -no / (nt * nt * nf) * own + no / (nt * nt * (nf - 1.0) * nf) * cross;
        (b1, b2)
    };
    let (b11, b12) = arm_terms(true);
    let (b01, b02) = arm_terms(false);
    // the arm-0 terms enter with the opposite sign
    adj_oracle(r) - b11 - b12 + b01 + b02
}

/// `n/(n_t(n_t-1))`-weighted sum of squared per-unit residuals.
pub fn hc_oracle(r: &Raw, resid: &Array1<f64>) -> f64 {
    let n = r.n() as f64;
    let mut total = 0.0;
    for t in [true, false] {
        let units = r.arm(t);
        let nt = units.len() as f64;
        total += n / (nt * (nt - 1.0)) * units.iter().map(|&i| resid[i] * resid[i]).sum::<f64>();
    }
    total
}

pub fn hc0_oracle(r: &Raw) -> f64 {
    hc_oracle(r, &r.arm_residuals())
}

pub fn hc2_oracle(r: &Raw) -> f64 {
    let e = r.arm_residuals();
    let h = r.arm_leverages();
    hc_oracle(r, &Array1::from_shape_fn(r.n(), |i| e[i] / (1.0 - h[i]).sqrt()))
}

pub fn hc3_oracle(r: &Raw) -> f64 {
    hc_oracle(r, &r.deletion_loo_residuals())
}

/// dbHC3 through the explicit `O(n^2)` double sums over `i != j`.
pub fn dbhc3_oracle(r: &Raw) -> f64 {
    let n = r.n();
    let nf = n as f64;
    let n1 = r.n1() as f64;
    let n0 = nf - n1;
    let p = hat_matrix(r.z().view());
    let e = r.deletion_loo_residuals();
    let (mut tt, mut cc, mut tc) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = p[[i, j]] * p[[i, j]] * e[i] * e[j];
            match (r.t[i], r.t[j]) {
                (true, true) => tt += w,
                (false, false) => cc += w,
                (true, false) => tc += w,
                (false, true) => {}
            }
        }
    }
    hc3_oracle(r) + n0 * n0 * nf / n1.powi(4) * tt + n1 * n1 * nf / n0.powi(4) * cc - 2.0 * nf / (n0 * n1) * tc
}

/// Random sample with `n` units, `n1` treated and `k` covariates.
pub fn random_raw(rng: &mut ChaCha8Rng, n: usize, n1: usize, k: usize) -> Raw {
    let x = normal_matrix(rng, n, k);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..n1 {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut t = vec![false; n];
    for &i in &idx[..n1] {
        t[i] = true;
    }
    let signal: Array1<f64> = x.dot(&normals(rng, k));
    let noise = normals(rng, n);
    // heteroskedastic in the first covariate, shifted under treatment
    let scale = |i: usize| if k > 0 { 1.0 + x[[i, 0]].abs() } else { 1.0 };
    let y = Array1::from_shape_fn(n, |i| signal[i] + scale(i) * noise[i] + if t[i] { 1.0 } else { 0.0 });
    Raw::new(y, t, x.view())
}

/// Random finite population with `k` covariates.
pub fn random_population(rng: &mut ChaCha8Rng, n: usize, n1: usize, k: usize) -> FinitePopulation<f64> {
    let x = normal_matrix(rng, n, k);
    let y1 = normals(rng, n) + 1.0;
    let y0 = normals(rng, n);
    FinitePopulation::new(y1, y0, x, n1).unwrap()
}

/// Full-population residuals by the oracle solver.
pub fn population_residuals_oracle(pop: &FinitePopulation<f64>) -> (Array1<f64>, Array1<f64>) {
    let z = with_intercept(pop.covariates());
    (residuals(z.view(), pop.y1()), residuals(z.view(), pop.y0()))
}

/// `|(n1/n0) Delta_0 - (n0/n1) Delta_1|` with `e(0) = eps`, `e(1) = 2 eps`.
pub fn worst_case_objective_oracle(h: &Array1<f64>, eps: &Array1<f64>, n1: usize) -> f64 {
    let n = eps.len() as f64;
    let n1 = n1 as f64;
    let n0 = n - n1;
    let d0 = h.dot(eps) / n;
    (n1 / n0 * d0 - n0 / n1 * 2.0 * d0).abs()
}

/// Maps `v` onto the feasible set `{Z'eps = 0, eps'eps = n}`.
pub fn feasible(p: &Array2<f64>, v: &Array1<f64>) -> Array1<f64> {
    let r = v - &p.dot(v);
    let norm = r.dot(&r).sqrt();
    r * ((v.len() as f64).sqrt() / norm)
}

/// Best objective over `draws` random feasible directions.
pub fn random_search(rng: &mut ChaCha8Rng, x: ArrayView2<'_, f64>, n1: usize, draws: usize) -> f64 {
    let p = hat_matrix(with_intercept(x).view());
    let h = p.diag().to_owned();
    (0..draws)
        .map(|_| worst_case_objective_oracle(&h, &feasible(&p, &normals(rng, x.nrows())), n1))
        .fold(0.0, f64::max)
}

/// Projected gradient ascent on the constraint sphere from a random start.
pub fn projected_gradient(rng: &mut ChaCha8Rng, x: ArrayView2<'_, f64>, n1: usize, iters: usize) -> f64 {
    let p = hat_matrix(with_intercept(x).view());
    let h = p.diag().to_owned();
    let mut eps = feasible(&p, &normals(rng, x.nrows()));
    for _ in 0..iters {
        // the objective is |c d'eps|, so its gradient is +/- c d
        let sign = h.dot(&eps).signum();
        eps = feasible(&p, &(&eps + &(&h * (0.5 * sign))));
    }
    worst_case_objective_oracle(&h, &eps, n1)
}
