//! The floating-point abstraction used by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};

/// Real scalar type the estimators are generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssign
    + Sum
    + LinalgScalar
    + ScalarOperand
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable")
    }

    /// Converts a count into this type.
    fn of_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    /// Relative tolerance for pivots and leverages: `1e-10`, widened to
    /// `100 * epsilon` for types too coarse to resolve it.
    fn rel_tol() -> Self {
        Self::of(1e-10).max(Self::epsilon() * Self::of(100.0))
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}
