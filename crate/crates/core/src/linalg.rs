//! Dense least squares: design matrices, a pivoted Cholesky factor of `Z'Z`,
//! projection (hat) matrix entries computed on demand, and the leave-one-out
//! coefficient identity.
//!
//! Nothing here materializes the `n x n` hat matrix. Every projection keeps
//! the whitened rows `q_i = L^{-1} z_i` (with `Z'Z = L L'` up to a symmetric
//! permutation), so `P_ij = q_i . q_j` costs `O(p)`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Regressor matrix `Z = [1, X]` whose first column is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    values: Array2<T>,
}

impl<T: Scalar> DesignMatrix<T> {
    /// Wraps a matrix whose first column must be identically one.
    pub fn new(values: Array2<T>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::DimensionMismatch("design matrix has no columns".into()));
        }
        if let Some(row) = values.column(0).iter().position(|&v| v != T::one()) {
            return Err(Error::InvalidDesign(format!(
                "first design column must be the intercept; row {row} is not 1"
            )));
        }
        Ok(Self { values })
    }

    /// Prepends an intercept column to the covariates.
    pub fn from_covariates(x: ArrayView2<'_, T>) -> Self {
        let mut values = Array2::ones((x.nrows(), x.ncols() + 1));
        values.slice_mut(s![.., 1..]).assign(&x);
        Self { values }
    }

    pub fn intercept_only(n: usize) -> Self {
        Self { values: Array2::ones((n, 1)) }
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, T> {
        self.values.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, T> {
        self.values.row(i)
    }

    /// Sub-design built from the listed rows, in the listed order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self { values: self.values.select(Axis(0), rows) }
    }

    /// Average row `n^{-1} sum_i z_i`.
    pub fn mean_row(&self) -> Array1<T> {
        let n = T::of_count(self.rows().max(1));
        self.values.sum_axis(Axis(0)) / n
    }

    pub fn gram(&self) -> Array2<T> {
        self.values.t().dot(&self.values)
    }
}

/// Pivoted Cholesky factor of a symmetric positive definite matrix:
/// `G[perm, perm] = L L'`.
#[derive(Debug, Clone)]
pub struct GramFactor<T> {
    perm: Vec<usize>,
    lower: Array2<T>,
}

impl<T: Scalar> GramFactor<T> {
    /// Factors `gram`, failing with `SingularGram` once the largest remaining
    /// pivot drops below `rel_tol * max_k G_kk`.
    pub fn factor(gram: ArrayView2<'_, T>) -> Result<Self> {
        let p = gram.nrows();
        if gram.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "Gram matrix is {}x{}",
                gram.nrows(),
                gram.ncols()
            )));
        }
        let max_diag = gram.diag().iter().fold(T::zero(), |m, &v| m.max(v));
        let tol = T::rel_tol() * max_diag;
        let mut a = gram.to_owned();
        let mut perm: Vec<usize> = (0..p).collect();

        for k in 0..p {
            let mut best = k;
            for j in k + 1..p {
                if a[[j, j]] > a[[best, best]] {
                    best = j;
                }
            }
            if best != k {
                perm.swap(k, best);
                for c in 0..p {
                    a.swap([k, c], [best, c]);
                }
                for r in 0..p {
                    a.swap([r, k], [r, best]);
                }
            }
            let pivot = a[[k, k]];
            // negated so a NaN pivot is also rejected
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(pivot > tol) {
                return Err(Error::SingularGram { pivot: k, dim: p });
            }
            let root = pivot.sqrt();
            a[[k, k]] = root;
            for i in k + 1..p {
                a[[i, k]] /= root;
            }
            for j in k + 1..p {
                let ljk = a[[j, k]];
                for i in j..p {
                    let update = a[[i, k]] * ljk;
                    a[[i, j]] -= update;
                    a[[j, i]] = a[[i, j]];
                }
            }
        }
        for i in 0..p {
            for j in i + 1..p {
                a[[i, j]] = T::zero();
            }
        }
        Ok(Self { perm, lower: a })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// `L^{-1} v[perm]`.
    pub fn whiten(&self, v: ArrayView1<'_, T>) -> Array1<T> {
        let p = self.dim();
        let mut w = Array1::zeros(p);
        for i in 0..p {
            let mut acc = v[self.perm[i]];
            for k in 0..i {
                acc -= self.lower[[i, k]] * w[k];
            }
            w[i] = acc / self.lower[[i, i]];
        }
        w
    }

    /// Inverse of `whiten`'s transpose: maps `w` to `x` with `x[perm] = L^{-T} w`.
    fn unwhiten_transpose(&self, w: ArrayView1<'_, T>) -> Array1<T> {
        let p = self.dim();
        let mut u = Array1::zeros(p);
        for i in (0..p).rev() {
            let mut acc = w[i];
            for k in i + 1..p {
                acc -= self.lower[[k, i]] * u[k];
            }
            u[i] = acc / self.lower[[i, i]];
        }
        let mut x = Array1::zeros(p);
        for (i, &pi) in self.perm.iter().enumerate() {
            x[pi] = u[i];
        }
        x
    }

    /// Solves `G x = b`.
    pub fn solve(&self, b: ArrayView1<'_, T>) -> Array1<T> {
        let w = self.whiten(b);
        self.unwhiten_transpose(w.view())
    }

    pub fn inverse(&self) -> Array2<T> {
        let p = self.dim();
        let mut inv = Array2::zeros((p, p));
        for j in 0..p {
            let mut e = Array1::zeros(p);
            e[j] = T::one();
            inv.column_mut(j).assign(&self.solve(e.view()));
        }
        inv
    }
}

/// Maximum leverage together with the full leverage vector.
#[derive(Debug, Clone, PartialEq)]
pub struct HatDiagnostics<T> {
    pub kappa: T,
    pub leverage_vector: Array1<T>,
}

/// Projection onto the column space of a design: factor, whitened rows and
/// leverages. Independent of any outcome vector.
#[derive(Debug, Clone)]
pub struct Projection<T> {
    design: DesignMatrix<T>,
    factor: GramFactor<T>,
    whitened: Array2<T>,
    leverages: Array1<T>,
}

impl<T: Scalar> Projection<T> {
    pub fn new(design: DesignMatrix<T>) -> Result<Self> {
        let (n, p) = (design.rows(), design.cols());
        if n < p {
            return Err(Error::SingularGram { pivot: n, dim: p });
        }
        let factor = GramFactor::factor(design.gram().view())?;
        let mut whitened = Array2::zeros((n, p));
        for (i, mut row) in whitened.rows_mut().into_iter().enumerate() {
            row.assign(&factor.whiten(design.row(i)));
        }
        let leverages = whitened.rows().into_iter().map(|q| q.dot(&q)).collect();
        Ok(Self { design, factor, whitened, leverages })
    }

    pub fn design(&self) -> &DesignMatrix<T> {
        &self.design
    }

    pub fn factor(&self) -> &GramFactor<T> {
        &self.factor
    }

    /// Rows `q_i` with `P_ij = q_i . q_j`.
    pub fn whitened(&self) -> ArrayView2<'_, T> {
        self.whitened.view()
    }

    pub fn leverages(&self) -> ArrayView1<'_, T> {
        self.leverages.view()
    }

    pub fn rows(&self) -> usize {
        self.design.rows()
    }

    pub fn cols(&self) -> usize {
        self.design.cols()
    }

    /// `P_ij = z_i' (Z'Z)^{-1} z_j`. Panics on out-of-range indices.
    pub fn hat_entry(&self, i: usize, j: usize) -> T {
        self.whitened.row(i).dot(&self.whitened.row(j))
    }

    /// `P v` without forming `P`.
    pub fn project(&self, v: ArrayView1<'_, T>) -> Array1<T> {
        let coef = self.whitened.t().dot(&v);
        self.whitened.dot(&coef)
    }

    pub fn kappa(&self) -> T {
        self.leverages.iter().fold(T::zero(), |m, &v| m.max(v))
    }

    pub fn hat_diagnostics(&self) -> HatDiagnostics<T> {
        HatDiagnostics { kappa: self.kappa(), leverage_vector: self.leverages.clone() }
    }

    /// Least-squares coefficients and residuals of `y` on the design.
    pub fn regress(&self, y: ArrayView1<'_, T>) -> Result<(Array1<T>, Array1<T>)> {
        if y.len() != self.rows() {
            return Err(Error::DimensionMismatch(format!(
                "outcome has {} entries, design has {} rows",
                y.len(),
                self.rows()
            )));
        }
        let zty = self.design.view().t().dot(&y);
        let coefficients = self.factor.solve(zty.view());
        let residuals = &y - &self.design.view().dot(&coefficients);
        Ok((coefficients, residuals))
    }

    /// Fits `y` on this design, taking ownership of the projection.
    pub fn fit(self, y: ArrayView1<'_, T>) -> Result<OlsFit<T>> {
        let (coefficients, residuals) = self.regress(y)?;
        Ok(OlsFit { projection: self, coefficients, residuals })
    }

    /// `sum_i w_i q_i q_i'` over the whitened rows, a `p x p` matrix.
    pub(crate) fn weighted_outer(&self, weights: ArrayView1<'_, T>) -> Array2<T> {
        let p = self.cols();
        let mut out = Array2::zeros((p, p));
        for (q, &w) in self.whitened.rows().into_iter().zip(weights.iter()) {
            if w == T::zero() {
                continue;
            }
            for a in 0..p {
                let wa = w * q[a];
                for b in a..p {
                    out[[a, b]] += wa * q[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                out[[a, b]] = out[[b, a]];
            }
        }
        out
    }

    /// `sum_{i != j} P_ij^2 a_i b_j`, computed as a Frobenius product of two
    /// `p x p` matrices minus the diagonal terms.
    pub fn offdiag_squared_hat_form(&self, a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
        let ma = self.weighted_outer(a);
        let full = if a == b {
            ma.iter().map(|&v| v * v).sum::<T>()
        } else {
            let mb = self.weighted_outer(b);
            ma.iter().zip(mb.iter()).map(|(&x, &y)| x * y).sum::<T>()
        };
        let diag: T = self
            .leverages
            .iter()
            .zip(a.iter().zip(b.iter()))
            .map(|(&h, (&ai, &bi))| h * h * ai * bi)
            .sum();
        full - diag
    }
}

/// Ordinary least-squares fit with its projection.
#[derive(Debug, Clone)]
pub struct OlsFit<T> {
    projection: Projection<T>,
    coefficients: Array1<T>,
    residuals: Array1<T>,
}

/// Fits `y` on `design` by least squares.
pub fn ols_fit<T: Scalar>(design: DesignMatrix<T>, y: ArrayView1<'_, T>) -> Result<OlsFit<T>> {
    Projection::new(design)?.fit(y)
}

impl<T: Scalar> OlsFit<T> {
    pub fn coefficients(&self) -> ArrayView1<'_, T> {
        self.coefficients.view()
    }

    pub fn residuals(&self) -> ArrayView1<'_, T> {
        self.residuals.view()
    }

    pub fn leverages(&self) -> ArrayView1<'_, T> {
        self.projection.leverages()
    }

    pub fn projection(&self) -> &Projection<T> {
        &self.projection
    }

    pub fn design(&self) -> &DesignMatrix<T> {
        self.projection.design()
    }

    pub fn hat_entry(&self, i: usize, j: usize) -> T {
        self.projection.hat_entry(i, j)
    }

    pub fn hat_diagnostics(&self) -> HatDiagnostics<T> {
        self.projection.hat_diagnostics()
    }

    /// `z_i' beta_hat`.
    pub fn fitted(&self, i: usize) -> T {
        self.design().row(i).dot(&self.coefficients)
    }

    fn check_leverage(&self, i: usize) -> Result<T> {
        let slack = T::one() - self.projection.leverages[i];
        if slack <= T::rel_tol() {
            return Err(Error::LeverageOne { index: i });
        }
        Ok(slack)
    }

    /// Leave-one-out prediction error `e_i / (1 - P_ii)`.
    pub fn loo_residual(&self, i: usize) -> Result<T> {
        let slack = self.check_leverage(i)?;
        Ok(self.residuals[i] / slack)
    }

    /// All leave-one-out residuals.
    pub fn loo_residuals(&self) -> Result<Array1<T>> {
        (0..self.residuals.len()).map(|i| self.loo_residual(i)).collect()
    }

    /// Coefficients with row `i` deleted, via
    /// `beta^(i) = beta - (Z'Z)^{-1} z_i e_i / (1 - P_ii)`.
    pub fn loo_coefficients(&self, i: usize) -> Result<Array1<T>> {
        let loo = self.loo_residual(i)?;
        let step = self.projection.factor.solve(self.design().row(i));
        Ok(&self.coefficients - &(step * loo))
    }

    /// `z_i' beta^(i)`, which reduces to `z_i' beta - P_ii e_i / (1 - P_ii)`.
    pub fn loo_prediction(&self, i: usize) -> Result<T> {
        let loo = self.loo_residual(i)?;
        Ok(self.fitted(i) - self.projection.leverages[i] * loo)
    }
}
