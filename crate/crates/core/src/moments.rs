//! Exact moments of centered assignment indicators under complete
//! randomization (`n1` of `n` units treated, drawn without replacement).
//!
//! A [`MomentSpec`] describes `E[prod_k (T_{i_k} - pi)^{a_k}]` for mutually
//! distinct units `i_1, .., i_m`. Three routes are provided:
//!
//! * [`closed_form_moment`]: the textbook closed forms where they are exact,
//!   otherwise an expansion into raw moments using `T^2 = T`;
//! * [`raw_moment`]: `E[T_{i_1} .. T_{i_k}] = n1^(k) / n^(k)` (falling factorials);
//! * [`enumerated_moment`]: the average over every assignment.
//!
//! All three are generic over a [`MomentField`]; use [`crate::Rational`] for
//! exact answers.

use std::fmt::Debug;
use std::ops::Neg;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, One, Zero};

use crate::error::{Error, Result};
use crate::population::{binomial, enumerate_assignments};

/// A field the moment formulas can be evaluated in.
pub trait MomentField: Clone + Debug + PartialEq + Num + Neg<Output = Self> {
    fn from_count(n: u64) -> Self;

    fn ratio(num: u64, den: u64) -> Self {
        Self::from_count(num) / Self::from_count(den)
    }
}

impl MomentField for BigRational {
    fn from_count(n: u64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
}

impl MomentField for f64 {
    fn from_count(n: u64) -> Self {
        n as f64
    }
}

/// Moment pattern: one exponent per distinct unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MomentSpec {
    pub exponents: Vec<u32>,
    pub n: u64,
    pub n1: u64,
}

/// Highest total order the oracle handles.
pub const MAX_ORDER: u32 = 6;

/// Supported patterns (exponents in non-increasing order) up to total order six:
/// the first seven have exact closed forms, the rest are stated only up to
/// their order of magnitude.
pub const CLOSED_FORM_PATTERNS: &[&[u32]] = &[
    &[1],
    &[2],
    &[1, 1],
    &[3],
    &[2, 1],
    &[1, 1, 1],
    &[4],
    &[2, 2],
    &[2, 1, 1],
    &[1, 1, 1, 1],
    &[2, 2, 2],
    &[3, 3],
    &[4, 2],
    &[5, 1],
    &[4, 1, 1],
    &[2, 2, 1, 1],
    &[3, 1, 1, 1],
    &[2, 1, 1, 1, 1],
    &[1, 1, 1, 1, 1, 1],
];

impl MomentSpec {
    pub fn new(exponents: Vec<u32>, n: u64, n1: u64) -> Result<Self> {
        let spec = Self { exponents, n, n1 };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n1 == 0 || self.n1 >= self.n {
            return Err(Error::InvalidDesign(format!("need 1 <= n1 < n, got n = {}, n1 = {}", self.n, self.n1)));
        }
        if self.exponents.is_empty() || self.exponents.contains(&0) {
            return Err(Error::Unsupported("exponents must be positive and non-empty".into()));
        }
        if self.exponents.len() as u64 > self.n {
            return Err(Error::Unsupported(format!(
                "{} distinct units requested but n = {}",
                self.exponents.len(),
                self.n
            )));
        }
        if self.order() > MAX_ORDER {
            return Err(Error::Unsupported(format!("total order {} exceeds {MAX_ORDER}", self.order())));
        }
        Ok(())
    }

    pub fn order(&self) -> u32 {
        self.exponents.iter().sum()
    }

    /// Exponents sorted in non-increasing order; moments depend only on this.
    pub fn pattern(&self) -> Vec<u32> {
        let mut p = self.exponents.clone();
        p.sort_unstable_by(|a, b| b.cmp(a));
        p
    }

    fn pi<R: MomentField>(&self) -> R {
        R::ratio(self.n1, self.n)
    }
}

fn pow<R: MomentField>(base: &R, exp: u32) -> R {
    (0..exp).fold(R::one(), |acc, _| acc * base.clone())
}

/// `E[T_{i_1} .. T_{i_k}]` for `k` distinct units: `prod_{m<k} (n1 - m) / (n - m)`.
pub fn raw_moment<R: MomentField>(k: u64, n: u64, n1: u64) -> R {
    (0..k).fold(R::one(), |acc, m| {
        if m >= n1 {
            R::zero()
        } else {
            acc * R::ratio(n1 - m, n - m)
        }
    })
}

/// Exact value through `(T - pi)^a = c_a T + (-pi)^a` with
/// `c_a = (1 - pi)^a - (-pi)^a`, expanding the product over subsets of units.
pub fn expanded_moment<R: MomentField>(spec: &MomentSpec) -> Result<R> {
    spec.validate()?;
    let pi: R = spec.pi();
    let q = R::one() - pi.clone();
    let neg_pi = -pi;
    let m = spec.exponents.len();
    let coeffs: Vec<(R, R)> = spec
        .exponents
        .iter()
        .map(|&a| {
            let constant = pow(&neg_pi, a);
            (pow(&q, a) - constant.clone(), constant)
        })
        .collect();
    let mut total = R::zero();
    for mask in 0u32..(1 << m) {
        let mut term = R::one();
        for (k, (slope, constant)) in coeffs.iter().enumerate() {
            term = term * if mask & (1 << k) != 0 { slope.clone() } else { constant.clone() };
        }
        total = total + term * raw_moment::<R>(u64::from(mask.count_ones()), spec.n, spec.n1);
    }
    Ok(total)
}

/// Closed-form moment for any pattern in [`CLOSED_FORM_PATTERNS`].
pub fn closed_form_moment<R: MomentField>(spec: &MomentSpec) -> Result<R> {
    spec.validate()?;
    let pattern = spec.pattern();
    if !CLOSED_FORM_PATTERNS.contains(&pattern.as_slice()) {
        return Err(Error::Unsupported(format!("pattern {pattern:?} is not a tabulated moment")));
    }
    let pi: R = spec.pi();
    let q = R::one() - pi.clone();
    let var = pi.clone() * q.clone();
    let skew = R::one() - pi.clone() - pi.clone();
    let nm1 = R::from_count(spec.n - 1);
    let two = R::from_count(2);
    let three = R::from_count(3);
    let value = match pattern.as_slice() {
        [1] => R::zero(),
        [2] => var,
        [1, 1] => -var / nm1,
        [3] => var * skew,
        [2, 1] => -var * skew / nm1,
        [1, 1, 1] => two * var * skew / (nm1 * R::from_count(spec.n - 2)),
        [4] => var.clone() * (R::one() - three * var),
        _ => expanded_moment(spec)?,
    };
    Ok(value)
}

/// Average of the product over all `C(n, n1)` assignments, using units
/// `0..m` for the `m` slots.
pub fn enumerated_moment<R: MomentField>(spec: &MomentSpec, cap: u128) -> Result<R> {
    spec.validate()?;
    let n = usize::try_from(spec.n).map_err(|_| Error::TooLarge { count: u128::MAX, cap })?;
    let n1 = usize::try_from(spec.n1).map_err(|_| Error::TooLarge { count: u128::MAX, cap })?;
    let count = binomial(spec.n, spec.n1);
    let pi: R = spec.pi();
    let treated: Vec<R> = spec.exponents.iter().map(|&a| pow(&(R::one() - pi.clone()), a)).collect();
    let control: Vec<R> = spec.exponents.iter().map(|&a| pow(&(-pi.clone()), a)).collect();
    let mut total = R::zero();
    for assignment in enumerate_assignments(n, n1, cap)? {
        let term = (0..spec.exponents.len()).fold(R::one(), |acc, k| {
            acc * if assignment.is_treated(k) { treated[k].clone() } else { control[k].clone() }
        });
        total = total + term;
    }
    Ok(total / R::from_count(u64::try_from(count).expect("count below cap")))
}

/// Order-of-magnitude statement `E[...] = leading + O(n^{-rate})` for fixed `pi`.
#[derive(Debug, Clone, Copy)]
pub struct OrderClaim {
    pub pattern: &'static [u32],
    pub label: &'static str,
    /// Leading term as a function of `(n, n1)`; zero when the claim is a pure rate.
    pub leading: fn(u64, u64) -> BigRational,
    pub rate: u32,
}

fn pi_q(n: u64, n1: u64) -> (BigRational, BigRational) {
    let pi = BigRational::ratio(n1, n);
    let q = BigRational::one() - pi.clone();
    (pi, q)
}

fn zero_lead(_: u64, _: u64) -> BigRational {
    BigRational::zero()
}

/// Remainder claims for the patterns without exact closed forms.
pub fn order_claims() -> Vec<OrderClaim> {
    fn c(n: u64) -> BigRational {
        BigRational::from_count(n)
    }
    vec![
        OrderClaim {
            pattern: &[2, 2],
            label: "n/(n-1) pi^2 (1-pi)^2",
            leading: |n, n1| {
                let (p, q) = pi_q(n, n1);
                c(n) / c(n - 1) * pow(&(p * q), 2)
            },
            rate: 1,
        },
        OrderClaim {
            pattern: &[2, 2],
            label: "pi^2 (1-pi)^2",
            leading: |n, n1| {
                let (p, q) = pi_q(n, n1);
                pow(&(p * q), 2)
            },
            rate: 1,
        },
        OrderClaim {
            pattern: &[2, 1, 1],
            label: "-n pi^2 (1-pi)^2 / ((n-1)(n-2))",
            leading: |n, n1| {
                let (p, q) = pi_q(n, n1);
                -c(n) * pow(&(p * q), 2) / (c(n - 1) * c(n - 2))
            },
            rate: 2,
        },
        OrderClaim {
            pattern: &[1, 1, 1, 1],
            label: "3n/(n-1) pi^2 (1-pi)^2 / ((n-2)(n-3))",
            leading: |n, n1| {
                let (p, q) = pi_q(n, n1);
                c(3) * c(n) / c(n - 1) * pow(&(p * q), 2) / (c(n - 2) * c(n - 3))
            },
            rate: 3,
        },
        OrderClaim {
            pattern: &[2, 2, 2],
            label: "pi^3 (1-pi)^3",
            leading: |n, n1| {
                let (p, q) = pi_q(n, n1);
                pow(&(p * q), 3)
            },
            rate: 1,
        },
        OrderClaim { pattern: &[3, 3], label: "O(1)", leading: zero_lead, rate: 0 },
        OrderClaim { pattern: &[4, 2], label: "O(1)", leading: zero_lead, rate: 0 },
        OrderClaim { pattern: &[5, 1], label: "O(n^-1)", leading: zero_lead, rate: 1 },
        OrderClaim { pattern: &[4, 1, 1], label: "O(n^-1)", leading: zero_lead, rate: 1 },
        OrderClaim { pattern: &[2, 2, 1, 1], label: "O(n^-1)", leading: zero_lead, rate: 1 },
        OrderClaim { pattern: &[3, 1, 1, 1], label: "O(n^-2)", leading: zero_lead, rate: 2 },
        OrderClaim { pattern: &[2, 1, 1, 1, 1], label: "O(n^-2)", leading: zero_lead, rate: 2 },
        OrderClaim { pattern: &[1, 1, 1, 1, 1, 1], label: "O(n^-3)", leading: zero_lead, rate: 3 },
    ]
}

/// `n^rate |E - leading|` along a grid of population sizes with treated share
/// `share_num / share_den`; bounded sequences support the claim.
pub fn scaled_remainders(claim: &OrderClaim, share_num: u64, share_den: u64, grid: &[u64]) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&n| {
            let n1 = n * share_num / share_den;
            let spec = MomentSpec::new(claim.pattern.to_vec(), n, n1)?;
            let exact: BigRational = expanded_moment(&spec)?;
            let remainder = exact - (claim.leading)(n, n1);
            let scaled = remainder * BigRational::from_count(n).pow(claim.rate as i32);
            Ok(ratio_to_f64(&scaled).abs())
        })
        .collect()
}

/// Nearest `f64` to a rational.
pub fn ratio_to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}
