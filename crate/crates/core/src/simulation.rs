//! Monte Carlo engine: fixed t(df) covariate designs, worst-case and normal
//! errors, and per-replication estimation with robust standard errors.
//!
//! Seed layout, all from `ChaCha8Rng::seed_from_u64(master_seed)`:
//!
//! | stream | contents |
//! |---|---|
//! | 0 | covariate matrix, column by column, each entry `z` then `df` normals |
//! | 1 | coefficient vector `b` |
//! | 2 | normal error vector |
//! | `2^63 + p 2^32 + r` | assignment for replication `r` at dimension `p` |
//!
//! Covariates are generated `n x max(p_grid)`, so the design for a smaller `p`
//! is a column prefix of the one for a larger `p`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{diff_in_means, estimate, ArmFits, EstimatorId};
use crate::linalg::{DesignMatrix, Projection};
use crate::population::{sample_assignment, FinitePopulation};
use crate::report::{SimResult, SimRow};
use crate::scalar::CompensatedSum;
use crate::theory::sigma_l2;
use crate::variance::{normal_critical_value, sigma2_with, VarianceMethod, VarianceReport};

const COVARIATE_STREAM: u64 = 0;
const COEFFICIENT_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Worst,
    Normal,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Worst => "worst",
            ErrorKind::Normal => "normal",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "worst" => Ok(ErrorKind::Worst),
            "normal" => Ok(ErrorKind::Normal),
            other => Err(Error::InvalidConfig(format!("unknown error_kind `{other}` (expected worst or normal)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub pi1: f64,
    pub p_grid: Vec<usize>,
    pub df: u32,
    pub error_kind: ErrorKind,
    pub reps: usize,
    pub master_seed: u64,
    pub estimators: Vec<EstimatorId>,
    pub se_methods: Vec<VarianceMethod>,
    pub ci_level: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 500,
            pi1: 0.2,
            p_grid: (1..=15).map(|k| 5 * k).collect(),
            df: 3,
            error_kind: ErrorKind::Worst,
            reps: 10_000,
            master_seed: 0,
            estimators: vec![EstimatorId::Adj, EstimatorId::Bc, EstimatorId::Unbiased, EstimatorId::Cf],
            se_methods: VarianceMethod::ALL.to_vec(),
            ci_level: 0.95,
        }
    }
}

impl SimConfig {
    /// Treated count `n pi1`.
    pub fn n1(&self) -> usize {
        (self.n as f64 * self.pi1).round() as usize
    }

    /// Design label used in output file names, e.g. `worst_t3`.
    pub fn design(&self) -> String {
        format!("{}_t{}", self.error_kind, self.df)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n < 4 {
            return bad(format!("n: need at least 4 units, got {}", self.n));
        }
        if !(self.pi1 > 0.0 && self.pi1 < 1.0) {
            return bad(format!("pi1: must lie in (0, 1), got {}", self.pi1));
        }
        let n1 = self.n as f64 * self.pi1;
        if (n1 - n1.round()).abs() > 1e-9 {
            return bad(format!("pi1: n * pi1 = {n1} is not an integer"));
        }
        let n1 = self.n1();
        if n1 == 0 || n1 >= self.n {
            return bad(format!("pi1: both arms must be non-empty, got n1 = {n1}"));
        }
        if self.df == 0 {
            return bad("df: must be positive".into());
        }
        if self.reps == 0 {
            return bad("reps: must be positive".into());
        }
        if self.reps as u64 > u64::from(u32::MAX) {
            return bad(format!("reps: at most {} replications", u32::MAX));
        }
        if self.p_grid.is_empty() {
            return bad("p_grid: must list at least one dimension".into());
        }
        let limit = n1.min(self.n - n1);
        for &p in &self.p_grid {
            if p == 0 || p + 1 >= limit || p as u64 > u64::from(u32::MAX) {
                return bad(format!("p_grid: each p must satisfy 1 <= p < min(n1, n0) - 1 = {}, got {p}", limit - 1));
            }
        }
        if self.estimators.is_empty() {
            return bad("estimators: must list at least one estimator".into());
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return bad(format!("ci_level: must lie in (0, 1), got {}", self.ci_level));
        }
        Ok(())
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn replication_stream(p: usize, r: usize) -> u64 {
    (1 << 63) | ((p as u64) << 32) | r as u64
}

/// One t(df) draw: `z / sqrt(chi2_df / df)` with the chi-square built from `df` squared normals.
pub fn student_t<R: Rng + ?Sized>(df: u32, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let chi2: f64 = (0..df)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            g * g
        })
        .sum();
    z / (chi2 / f64::from(df)).sqrt()
}

/// The fixed ingredients shared by every `p` in a campaign.
#[derive(Debug, Clone)]
pub struct Dgp {
    config: SimConfig,
    covariates: Array2<f64>,
    coefficients: Array1<f64>,
    noise: Array1<f64>,
}

impl Dgp {
    pub fn new(config: &SimConfig) -> Result<Self> {
        let width = config.p_grid.iter().copied().max().unwrap_or(0);
        Self::with_width(config, width)
    }

    /// Generates `width` covariate columns regardless of the grid.
    pub fn with_width(config: &SimConfig, width: usize) -> Result<Self> {
        let n = config.n;
        let mut rng = stream(config.master_seed, COVARIATE_STREAM);
        let mut covariates = Array2::zeros((n, width));
        for j in 0..width {
            for i in 0..n {
                covariates[[i, j]] = student_t(config.df, &mut rng);
            }
        }
        let mut rng = stream(config.master_seed, COEFFICIENT_STREAM);
        let coefficients = Array1::from_shape_fn(width, |_| rng.sample(StandardNormal));
        let mut rng = stream(config.master_seed, NOISE_STREAM);
        let noise = Array1::from_shape_fn(n, |_| rng.sample(StandardNormal));
        Ok(Self { config: config.clone(), covariates, coefficients, noise })
    }

    pub fn covariates(&self) -> ArrayView2<'_, f64> {
        self.covariates.view()
    }

    pub fn coefficients(&self) -> ArrayView1<'_, f64> {
        self.coefficients.view()
    }

    /// Population for the first `p` covariates: `Y(t) = X b_{1..p} + eps(t)`.
    pub fn population(&self, p: usize) -> Result<FinitePopulation<f64>> {
        if p == 0 || p > self.covariates.ncols() {
            return Err(Error::InvalidDesign(format!(
                "p = {p} outside the generated width {}",
                self.covariates.ncols()
            )));
        }
        let x = self.covariates.slice(ndarray::s![.., ..p]).to_owned();
        let signal = x.dot(&self.coefficients.slice(ndarray::s![..p]));
        let (e1, e0) = match self.config.error_kind {
            ErrorKind::Normal => (self.noise.clone(), self.noise.clone()),
            ErrorKind::Worst => {
                let eps = worst_case_errors(x.view())?;
                (&eps * 2.0, eps)
            }
        };
        FinitePopulation::new(&signal + &e1, &signal + &e0, x, self.config.n1())
    }
}

/// Population for dimension `p`; the covariate matrix depends only on the
/// seed, `n`, `df` and `max(p_grid)`.
pub fn build_dgp(config: &SimConfig, p: usize) -> Result<FinitePopulation<f64>> {
    if p == 0 {
        return Err(Error::InvalidDesign("p must be at least 1".into()));
    }
    let width = config.p_grid.iter().copied().max().unwrap_or(0).max(p);
    Dgp::with_width(config, width)?.population(p)
}

/// Unit-norm (`eps'eps / n = 1`) error vector orthogonal to `[1, X]` that
/// maximizes `|d'eps|` for the full-sample leverages `d`:
/// `eps = sqrt(n) (I - P) d / ||(I - P) d||`.
pub fn worst_case_errors(x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    let mut centered = x.to_owned();
    crate::population::center_columns(&mut centered);
    let projection = Projection::new(DesignMatrix::from_covariates(centered.view()))?;
    let d = projection.leverages().to_owned();
    let r = &d - &projection.project(d.view());
    let norm = r.dot(&r).sqrt();
    if norm <= 1e-12 {
        return Err(Error::DegenerateObjective);
    }
    Ok(r * ((x.nrows() as f64).sqrt() / norm))
}

/// `|(n1/n0) Delta_0 - (n0/n1) Delta_1|` with `e(0) = eps`, `e(1) = 2 eps` and
/// `Delta_t = n^{-1} sum_i e_i(t) P_ii`.
pub fn worst_case_objective(leverages: ArrayView1<'_, f64>, eps: ArrayView1<'_, f64>, n1: usize) -> f64 {
    let n = eps.len() as f64;
    let n1 = n1 as f64;
    let n0 = n - n1;
    let delta0 = leverages.dot(&eps) / n;
    let delta1 = 2.0 * delta0;
    (n1 / n0 * delta0 - n0 / n1 * delta1).abs()
}

/// Per-replication results: estimates per requested estimator and `se` per
/// requested method, for the covariate design and the intercept-only design.
#[derive(Debug, Clone)]
struct Replication {
    tau_hat: Vec<Option<f64>>,
    se_adjusted: Vec<Option<f64>>,
    se_dif: Vec<Option<f64>>,
}

struct Setting<'a> {
    config: &'a SimConfig,
    population: &'a FinitePopulation<f64>,
    projection: Arc<Projection<f64>>,
    intercept: Arc<Projection<f64>>,
    covariate_estimators: bool,
    dif: bool,
}

impl Setting<'_> {
    fn replicate(&self, p: usize, r: usize) -> Replication {
        let cfg = self.config;
        let mut rng = stream(cfg.master_seed, replication_stream(p, r));
        let none = || vec![None; cfg.se_methods.len()];
        let assignment = match sample_assignment(cfg.n, cfg.n1(), &mut rng) {
            Ok(a) => a,
            Err(_) => {
                return Replication { tau_hat: vec![None; cfg.estimators.len()], se_adjusted: none(), se_dif: none() }
            }
        };
        let sample = self.population.observe(&assignment, self.projection.clone());
        let fits = match (&sample, self.covariate_estimators) {
            (Ok(s), true) => Some(ArmFits::fit(s)),
            _ => None,
        };
        let tau_hat = cfg
            .estimators
            .iter()
            .map(|&id| {
                let s = sample.as_ref().ok()?;
                if id == EstimatorId::Dif {
                    diff_in_means(s).ok().map(|e| e.tau_hat)
                } else {
                    let f = fits.as_ref()?.as_ref().ok()?;
                    estimate(id, s, f).ok().map(|e| e.tau_hat)
                }
            })
            .collect();
        let se_of = |s: &crate::population::ObservedSample<f64>, f: &ArmFits<f64>, m: VarianceMethod| {
            sigma2_with(m, s, f).ok().map(|v| VarianceReport::new(m, v, s.n()).se)
        };
        let se_adjusted = match (&sample, &fits) {
            (Ok(s), Some(Ok(f))) => cfg.se_methods.iter().map(|&m| se_of(s, f, m)).collect(),
            _ => none(),
        };
        let se_dif = match (self.dif, &sample) {
            (true, Ok(s)) => {
                let plain = crate::population::ObservedSample::with_projection(
                    s.y().to_owned(),
                    assignment.clone(),
                    self.intercept.clone(),
                );
                match plain.as_ref().map(ArmFits::fit) {
                    Ok(Ok(f)) => cfg.se_methods.iter().map(|&m| se_of(plain.as_ref().unwrap(), &f, m)).collect(),
                    _ => none(),
                }
            }
            _ => none(),
        };
        Replication { tau_hat, se_adjusted, se_dif }
    }
}

fn mean_and_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let k = values.len() as f64;
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / k;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).collect::<CompensatedSum>().value();
    (Some(mean), Some((ss / (k - 1.0)).sqrt()))
}

/// Runs every replication for one population and aggregates the rows for dimension `p`.
pub fn simulate_population(
    config: &SimConfig,
    p: usize,
    population: &FinitePopulation<f64>,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Vec<SimRow>> {
    config.validate()?;
    if population.n() != config.n || population.n1() != config.n1() {
        return Err(Error::DimensionMismatch("population does not match the configuration".into()));
    }
    let setting = Setting {
        config,
        population,
        projection: Arc::new(population.projection()?),
        intercept: Arc::new(Projection::new(DesignMatrix::intercept_only(config.n))?),
        covariate_estimators: config.estimators.iter().any(|e| e.uses_covariates()),
        dif: config.estimators.contains(&EstimatorId::Dif),
    };
    let run = || -> Vec<Replication> { (0..config.reps).into_par_iter().map(|r| setting.replicate(p, r)).collect() };
    let reps = match pool {
        Some(pool) => pool.install(run),
        None => run(),
    };

    let tau = population.tau();
    // sigma_L^2 at roundoff level relative to the outcomes counts as zero
    let sigma_l = {
        let s2 = sigma_l2(population)?;
        let scale = (population.y1().dot(&population.y1()) + population.y0().dot(&population.y0())) / config.n as f64;
        (s2 > 1e-12 * scale).then(|| s2.sqrt())
    };
    let z = normal_critical_value(config.ci_level);

    struct Summary {
        bias: Option<f64>,
        sd: Option<f64>,
    }
    let summaries: Vec<Summary> = (0..config.estimators.len())
        .map(|k| {
            let values: Vec<f64> = reps.iter().filter_map(|rep| rep.tau_hat[k]).collect();
            let (mean, sd) = mean_and_sd(&values);
            Summary { bias: mean.map(|m| m - tau), sd }
        })
        .collect();
    let cf_sd = config
        .estimators
        .iter()
        .position(|&e| e == EstimatorId::Cf)
        .and_then(|k| summaries[k].sd)
        .filter(|&s| s > 0.0);

    let mut rows = Vec::new();
    for (k, &estimator) in config.estimators.iter().enumerate() {
        let Summary { bias, sd } = summaries[k];
        let base = SimRow {
            design: config.design(),
            df: config.df,
            error_kind: config.error_kind,
            p,
            estimator,
            se_method: None,
            bias,
            relative_bias: bias.zip(sigma_l).map(|(b, s)| b / s),
            sd,
            sd_ratio_vs_cf: sd.zip(cf_sd).map(|(s, c)| s / c),
            coverage: None,
            mean_se: None,
            failures: reps.iter().filter(|rep| rep.tau_hat[k].is_none()).count(),
            reps: config.reps,
        };
        if config.se_methods.is_empty() {
            rows.push(base);
            continue;
        }
        for (m, &method) in config.se_methods.iter().enumerate() {
            let pairs: Vec<(f64, f64)> = reps
                .iter()
                .filter_map(|rep| {
                    let se = if estimator == EstimatorId::Dif { rep.se_dif[m] } else { rep.se_adjusted[m] };
                    rep.tau_hat[k].zip(se)
                })
                .collect();
            let hits = pairs.iter().filter(|(t, se)| (t - tau).abs() <= z * se).count();
            let ok = pairs.len();
            rows.push(SimRow {
                se_method: Some(method),
                coverage: (ok > 0).then(|| hits as f64 / ok as f64),
                mean_se: (ok > 0).then(|| pairs.iter().map(|&(_, se)| se).collect::<CompensatedSum>().value() / ok as f64),
                failures: config.reps - ok,
                ..base.clone()
            });
        }
    }
    Ok(rows)
}

/// Full campaign on the default rayon pool.
pub fn run_monte_carlo(config: &SimConfig) -> Result<SimResult> {
    run_campaign(config, None)
}

/// Full campaign on a dedicated pool of `threads` workers (`None`: rayon default).
pub fn run_monte_carlo_with_threads(config: &SimConfig, threads: Option<usize>) -> Result<SimResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("threads: {e}")))?;
    run_campaign(config, Some(&pool))
}

fn run_campaign(config: &SimConfig, pool: Option<&rayon::ThreadPool>) -> Result<SimResult> {
    config.validate()?;
    let dgp = Dgp::new(config)?;
    let mut rows = Vec::new();
    for &p in &config.p_grid {
        let population = dgp.population(p)?;
        rows.extend(simulate_population(config, p, &population, pool)?);
    }
    Ok(SimResult { design: config.design(), config: config.clone(), rows })
}
