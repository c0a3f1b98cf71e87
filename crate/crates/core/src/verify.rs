//! Built-in verification suites: exact enumeration and refit oracles that can
//! be run from a release binary.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimators::{diff_in_means, unbiased};
use crate::linalg::{ols_fit, DesignMatrix, Projection};
use crate::moments::{closed_form_moment, enumerated_moment, order_claims, scaled_remainders, MomentSpec, CLOSED_FORM_PATTERNS};
use crate::population::{enumerate_assignments, FinitePopulation, DEFAULT_ENUMERATION_CAP};
use crate::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    Moments,
    Unbiasedness,
    Loo,
    Projections,
    All,
}

impl Suite {
    pub const EACH: [Suite; 4] = [Suite::Moments, Suite::Unbiasedness, Suite::Loo, Suite::Projections];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Moments => "moments",
            Suite::Unbiasedness => "unbiasedness",
            Suite::Loo => "loo",
            Suite::Projections => "projections",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::EACH
            .into_iter()
            .chain([Suite::All])
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown verification suite `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{status}] {}/{}: {}", self.suite, self.name, self.detail)
    }
}

fn check(suite: Suite, name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check { suite, name: name.into(), passed, detail: detail.into() }
}

pub fn run(suite: Suite) -> Vec<Check> {
    match suite {
        Suite::Moments => moments(),
        Suite::Unbiasedness => unbiasedness(),
        Suite::Loo => loo(),
        Suite::Projections => projections(),
        Suite::All => Suite::EACH.into_iter().flat_map(run).collect(),
    }
}

/// Population sizes for the exact moment comparison.
pub const MOMENT_GRID: [(u64, u64); 4] = [(4, 2), (5, 2), (6, 3), (7, 3)];

fn moments() -> Vec<Check> {
    let mut out = Vec::new();
    for (n, n1) in MOMENT_GRID {
        let mut compared = 0;
        let mut mismatches = Vec::new();
        for pattern in CLOSED_FORM_PATTERNS {
            if pattern.len() as u64 > n {
                continue;
            }
            let spec = MomentSpec::new(pattern.to_vec(), n, n1).expect("valid pattern");
            let closed: Result<Rational> = closed_form_moment(&spec);
            let enumerated: Result<Rational> = enumerated_moment(&spec, DEFAULT_ENUMERATION_CAP);
            compared += 1;
            match (closed, enumerated) {
                (Ok(a), Ok(b)) if a == b => {}
                (a, b) => mismatches.push(format!("{pattern:?}: {a:?} vs {b:?}")),
            }
        }
        out.push(check(
            Suite::Moments,
            format!("closed_form_vs_enumeration(n={n},n1={n1})"),
            mismatches.is_empty(),
            if mismatches.is_empty() {
                format!("{compared} patterns agree exactly")
            } else {
                mismatches.join("; ")
            },
        ));
    }
    let grid = [50, 100, 200, 400, 800];
    for claim in order_claims() {
        let name = format!("order{:?}~{}", claim.pattern, claim.label);
        match scaled_remainders(&claim, 1, 4, &grid) {
            Ok(seq) => {
                let bounded = seq.windows(2).skip(1).all(|w| w[1] <= 1.5 * w[0] + 1e-12);
                out.push(check(Suite::Moments, name, bounded, format!("n^{} |remainder| = {}", claim.rate, seq.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", "))));
            }
            Err(e) => out.push(check(Suite::Moments, name, false, e.to_string())),
        }
    }
    out
}

/// `(y1, y0, covariates, n1)` for the shipped enumeration fixtures.
pub fn unbiasedness_fixtures() -> Vec<(&'static str, FinitePopulation<f64>)> {
    let small = FinitePopulation::new(
        ndarray::array![2.1, -0.4, 3.3, 1.0, 0.7, 5.2],
        ndarray::array![1.5, 0.2, 2.0, -1.1, 0.3, 2.4],
        ndarray::array![[0.5], [-1.2], [2.3], [0.1], [-0.7], [1.9]],
        3,
    )
    .expect("valid fixture");
    let large = FinitePopulation::new(
        ndarray::array![1.3, -0.8, 2.6, 0.4, 3.9, -1.7, 0.9, 2.2],
        ndarray::array![0.6, -1.1, 1.8, 0.9, 2.5, -0.3, -0.2, 1.4],
        ndarray::array![
            [0.3, 1.1],
            [-1.4, 0.2],
            [2.2, -0.5],
            [0.7, 1.9],
            [-0.6, -1.3],
            [1.5, 0.4],
            [-2.1, 0.8],
            [0.9, -2.0]
        ],
        4,
    )
    .expect("valid fixture");
    vec![("n=6,n1=3,p=2", small), ("n=8,n1=4,p=3", large)]
}

/// Averages of the unbiased and difference-in-means estimators over every
/// assignment, returned as `(tau, mean_unbiased, mean_dif)`.
pub fn enumeration_means(pop: &FinitePopulation<f64>) -> Result<(f64, f64, f64)> {
    let projection = std::sync::Arc::new(pop.projection()?);
    let mut count = 0usize;
    let (mut ub, mut dif) = (0.0, 0.0);
    for a in enumerate_assignments(pop.n(), pop.n1(), DEFAULT_ENUMERATION_CAP)? {
        let sample = pop.observe(&a, projection.clone())?;
        ub += unbiased(&sample)?.tau_hat;
        dif += diff_in_means(&sample)?.tau_hat;
        count += 1;
    }
    Ok((pop.tau(), ub / count as f64, dif / count as f64))
}

fn unbiasedness() -> Vec<Check> {
    unbiasedness_fixtures()
        .into_iter()
        .map(|(label, pop)| match enumeration_means(&pop) {
            Ok((tau, ub, dif)) => {
                let err = (ub - tau).abs().max((dif - tau).abs());
                check(
                    Suite::Unbiasedness,
                    format!("enumeration({label})"),
                    err <= 1e-10,
                    format!("tau = {tau}, E[unbiased] = {ub}, E[dif] = {dif}, max error {err:.2e}"),
                )
            }
            Err(e) => check(Suite::Unbiasedness, format!("enumeration({label})"), false, e.to_string()),
        })
        .collect()
}

/// Seeded random design `[1, X]` with `n` rows and `p` columns.
pub fn random_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DesignMatrix<f64> {
    let x = Array2::from_shape_fn((n, p - 1), |_| rng.sample::<f64, _>(StandardNormal));
    DesignMatrix::from_covariates(x.view())
}

fn loo() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut worst = 0.0f64;
    let mut failures = 0;
    let instances = 100;
    for _ in 0..instances {
        let p = rng.random_range(1..=8);
        let n = rng.random_range(p + 2..=100);
        let design = random_design(&mut rng, n, p);
        let y = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
        let fit = match ols_fit(design.clone(), y.view()) {
            Ok(f) => f,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let i = rng.random_range(0..n);
        let keep: Vec<usize> = (0..n).filter(|&k| k != i).collect();
        let refit = ols_fit(design.select_rows(&keep), y.select(ndarray::Axis(0), &keep).view());
        match (fit.loo_coefficients(i), refit) {
            (Ok(a), Ok(b)) => {
                let err = (&a - &b.coefficients()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                worst = worst.max(err);
            }
            _ => failures += 1,
        }
    }
    vec![check(
        Suite::Loo,
        "identity_vs_deletion_refit",
        failures == 0 && worst <= 1e-9,
        format!("{instances} instances, max |diff| {worst:.2e}, {failures} failures"),
    )]
}

fn projections() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let mut worst = [0.0f64; 3];
    let instances = 50;
    let mut failures = 0;
    for _ in 0..instances {
        let p = rng.random_range(1..=30);
        let n = rng.random_range(p + 1..=200);
        let projection = match Projection::new(random_design(&mut rng, n, p)) {
            Ok(pr) => pr,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let h = projection.leverages();
        worst[0] = worst[0].max((h.sum() - p as f64).abs());
        for i in 0..n {
            let (mut row, mut sq) = (0.0, 0.0);
            for j in 0..n {
                let pij = projection.hat_entry(i, j);
                row += pij;
                sq += pij * pij;
            }
            worst[1] = worst[1].max((row - 1.0).abs());
            worst[2] = worst[2].max((sq - h[i]).abs());
        }
    }
    let names = ["trace_equals_p", "row_sums_one", "idempotent_diagonal"];
    names
        .iter()
        .zip(worst)
        .map(|(name, w)| {
            check(
                Suite::Projections,
                *name,
                failures == 0 && w <= 1e-8,
                format!("{instances} instances, max error {w:.2e}, {failures} failures"),
            )
        })
        .collect()
}
