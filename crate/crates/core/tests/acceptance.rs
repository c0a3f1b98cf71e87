//! Acceptance criteria, one line each. Runs without the libtest harness so the
//! report is always printed; exits non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use designbench::moments::{closed_form_moment, enumerated_moment, MomentSpec, CLOSED_FORM_PATTERNS};
use designbench::report::SimResult;
use designbench::simulation::run_monte_carlo_with_threads;
use designbench::variance::dbhc3;
use designbench::verify::{enumeration_means, unbiasedness_fixtures, MOMENT_GRID};
use designbench::{
    adjusted, ols_fit, DesignMatrix, ErrorKind, EstimatorId, Projection, Rational, SimConfig, VarianceMethod,
};
use rand::Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn unbiasedness() -> Outcome {
    let start = Instant::now();
    let mut g = rng(0xacc0);
    let mut pops = unbiasedness_fixtures().into_iter().map(|(_, p)| p).collect::<Vec<_>>();
    pops.push(random_population(&mut g, 6, 3, 1));
    pops.push(random_population(&mut g, 8, 4, 2));
    let mut worst = 0.0f64;
    for pop in &pops {
        let (tau, ub, dif) = enumeration_means(pop).expect("fixture is estimable under every assignment");
        worst = worst.max((ub - tau).abs()).max((dif - tau).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-10 && elapsed < Duration::from_secs(1),
        format!("{} populations, max |E - tau| = {worst:.2e}, {elapsed:.2?}", pops.len()),
    )
}

fn moments() -> Outcome {
    let start = Instant::now();
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for (n, n1) in MOMENT_GRID {
        for pattern in CLOSED_FORM_PATTERNS.iter().filter(|p| p.len() as u64 <= n) {
            let spec = MomentSpec::new(pattern.to_vec(), n, n1).unwrap();
            let a: Rational = closed_form_moment(&spec).unwrap();
            let b: Rational = enumerated_moment(&spec, 1 << 20).unwrap();
            compared += 1;
            if a != b {
                mismatches.push(format!("{pattern:?}@({n},{n1})"));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches.is_empty() && elapsed < Duration::from_secs(5),
        format!("{compared} (pattern, n, n1) cases exact, {} mismatches {mismatches:?}, {elapsed:.2?}", mismatches.len()),
    )
}

fn leave_one_out() -> Outcome {
    let start = Instant::now();
    let mut g = rng(0xacc1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = g.random_range(1..=8);
        let n = g.random_range(p + 3..=100);
        let x = normal_matrix(&mut g, n, p - 1);
        let y = normals(&mut g, n);
        let z = with_intercept(x.view());
        let fit = ols_fit(DesignMatrix::from_covariates(x.view()), y.view()).unwrap();
        for i in [0, n / 2, n - 1] {
            let lib = fit.loo_coefficients(i).unwrap();
            worst = worst.max(max_abs(&lib - &deletion_refit(z.view(), y.view(), i)));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && elapsed < Duration::from_secs(5),
        format!("100 instances, max |identity - refit| = {worst:.2e}, {elapsed:.2?}"),
    )
}

fn projections() -> Outcome {
    let mut g = rng(0xacc2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let p = g.random_range(1..=30);
        let n = g.random_range(p + 1..=200);
        let x = normal_matrix(&mut g, n, p - 1);
        let pr = Projection::new(DesignMatrix::from_covariates(x.view())).unwrap();
        let h = pr.leverages();
        worst = worst.max((h.sum() - p as f64).abs());
        for i in 0..n {
            let row: Vec<f64> = (0..n).map(|j| pr.hat_entry(i, j)).collect();
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
            worst = worst.max((row.iter().map(|v| v * v).sum::<f64>() - h[i]).abs());
        }
    }
    outcome(worst <= 1e-8, format!("50 instances, max identity error = {worst:.2e}"))
}

fn interacted_regression() -> Outcome {
    let mut g = rng(0xacc3);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let k = g.random_range(1..=6);
        let n = g.random_range(4 * k + 12..=150);
        let n1 = g.random_range(k + 3..=n - k - 3);
        let r = random_raw(&mut g, n, n1, k);
        worst = worst.max((adjusted(&r.sample()).unwrap().tau_hat - interacted_ols(&r)).abs());
    }
    outcome(worst <= 1e-9, format!("50 instances, max |adj - coefficient on T| = {worst:.2e}"))
}

fn dbhc3_transcription() -> Outcome {
    let mut g = rng(0xacc4);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let k = g.random_range(1..=5);
        let n = g.random_range(4 * k + 12..=120);
        let n1 = g.random_range(k + 3..=n - k - 3);
        let r = random_raw(&mut g, n, n1, k);
        let lib = dbhc3(&r.sample()).unwrap().sigma2;
        let oracle = dbhc3_oracle(&r);
        worst = worst.max((lib - oracle).abs() / (1.0 + oracle.abs()));
    }
    outcome(worst <= 1e-9, format!("20 instances, max relative gap to the double sum = {worst:.2e}"))
}

fn worst_case_solver() -> Outcome {
    let mut g = rng(0xacc5);
    let mut detail = Vec::new();
    let mut passed = true;
    for (n, k, n1) in [(50, 3, 12), (30, 2, 10)] {
        let x = normal_matrix(&mut g, n, k).mapv(|v| v * v * v);
        let eps = designbench::worst_case_errors(x.view()).unwrap();
        let h = hat_matrix(with_intercept(x.view()).view()).diag().to_owned();
        let best = worst_case_objective_oracle(&h, &eps, n1);
        let random = random_search(&mut g, x.view(), n1, 10_000);
        let pg = projected_gradient(&mut g, x.view(), n1, 5000);
        let rel = (best - pg).abs() / best;
        passed &= best >= random && rel <= 1e-6;
        detail.push(format!("n={n}: closed form {best:.6} vs random best {random:.6}, projected gradient gap {rel:.1e}"));
    }
    outcome(passed, detail.join("; "))
}

fn row(result: &SimResult, p: usize, est: EstimatorId, se: Option<VarianceMethod>) -> &designbench::SimRow {
    result
        .rows
        .iter()
        .find(|r| r.p == p && r.estimator == est && (se.is_none() || r.se_method == se))
        .expect("row present")
}

fn relative_bias_ordering() -> Outcome {
    let start = Instant::now();
    let cfg = SimConfig {
        p_grid: vec![40, 60, 75],
        reps: 1000,
        estimators: vec![EstimatorId::Adj, EstimatorId::Bc, EstimatorId::Cf],
        se_methods: vec![],
        ..SimConfig::default()
    };
    let result = run_monte_carlo_with_threads(&cfg, Some(4)).unwrap();
    let mut passed = true;
    let mut detail = Vec::new();
    for &p in &cfg.p_grid {
        let rb = |e| row(&result, p, e, None).relative_bias.unwrap().abs();
        let (cf, adj, bc) = (rb(EstimatorId::Cf), rb(EstimatorId::Adj), rb(EstimatorId::Bc));
        passed &= cf < adj.min(bc);
        detail.push(format!("p={p}: |rb| cf {cf:.4} adj {adj:.4} bc {bc:.4}"));
    }
    outcome(passed, format!("{} ({:.1?})", detail.join("; "), start.elapsed()))
}

fn sd_ratio() -> Outcome {
    let start = Instant::now();
    let cfg = SimConfig {
        p_grid: vec![30, 50],
        reps: 1000,
        error_kind: ErrorKind::Normal,
        estimators: vec![EstimatorId::Unbiased, EstimatorId::Cf],
        se_methods: vec![],
        ..SimConfig::default()
    };
    let result = run_monte_carlo_with_threads(&cfg, Some(4)).unwrap();
    let mut passed = true;
    let mut detail = Vec::new();
    for &p in &cfg.p_grid {
        let ratio = row(&result, p, EstimatorId::Unbiased, None).sd_ratio_vs_cf.unwrap();
        passed &= ratio >= 5.0;
        detail.push(format!("p={p}: sd(unbiased)/sd(cf) = {ratio:.2}"));
    }
    outcome(passed, format!("{} (threshold 5) ({:.1?})", detail.join("; "), start.elapsed()))
}

fn coverage() -> Outcome {
    let start = Instant::now();
    let cfg = SimConfig {
        p_grid: vec![20, 40],
        reps: 2000,
        df: 4,
        estimators: vec![EstimatorId::Cf],
        se_methods: vec![VarianceMethod::Hc2, VarianceMethod::Hc3, VarianceMethod::DbHc3],
        ..SimConfig::default()
    };
    let result = run_monte_carlo_with_threads(&cfg, Some(4)).unwrap();
    let cov = |p, m| row(&result, p, EstimatorId::Cf, Some(m)).coverage.unwrap();
    let mut passed = true;
    let mut detail = Vec::new();
    for p in [20, 40] {
        let db = cov(p, VarianceMethod::DbHc3);
        passed &= (0.93..=0.97).contains(&db);
        detail.push(format!("p={p}: dbhc3 {db:.4}"));
    }
    let (hc2, hc3) = (cov(40, VarianceMethod::Hc2), cov(40, VarianceMethod::Hc3));
    passed &= hc2 < hc3;
    detail.push(format!("p=40: hc2 {hc2:.4} < hc3 {hc3:.4}"));
    outcome(passed, format!("{} ({:.1?})", detail.join("; "), start.elapsed()))
}

fn determinism() -> Outcome {
    let cfg = SimConfig {
        n: 200,
        p_grid: vec![5, 10, 20],
        reps: 300,
        master_seed: 2024,
        estimators: EstimatorId::ALL.to_vec(),
        ..SimConfig::default()
    };
    let csv: Vec<String> =
        [1, 2, 8].iter().map(|&t| run_monte_carlo_with_threads(&cfg, Some(t)).unwrap().to_csv()).collect();
    let same = csv.iter().all(|c| c.as_bytes() == csv[0].as_bytes());
    outcome(same, format!("workers 1/2/8, {} bytes each, identical = {same}", csv[0].len()))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("exact-unbiasedness", unbiasedness),
        ("moment-oracle", moments),
        ("leave-one-out-identity", leave_one_out),
        ("projection-identities", projections),
        ("interacted-ols-equivalence", interacted_regression),
        ("dbhc3-transcription", dbhc3_transcription),
        ("worst-case-solver", worst_case_solver),
        ("relative-bias-ordering", relative_bias_ordering),
        ("sd-ratio", sd_ratio),
        ("coverage", coverage),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        let o = run();
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        if !o.passed {
            failed.push(name);
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed.len(), criteria.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
