mod common;

use common::*;
use designbench::report::SIM_RESULT_COLUMNS;
use designbench::simulation::{run_monte_carlo_with_threads, simulate_population, worst_case_objective, Dgp};
use designbench::{
    build_dgp, worst_case_errors, Error, ErrorKind, EstimatorId, FinitePopulation, SimConfig, VarianceMethod,
};
use ndarray::{s, Array1};

fn small() -> SimConfig {
    SimConfig { n: 80, pi1: 0.25, p_grid: vec![3, 6], reps: 60, master_seed: 5, ..SimConfig::default() }
}

#[test]
fn worst_case_satisfies_constraints() {
    let x = normal_matrix(&mut rng(50), 50, 4);
    let eps = worst_case_errors(x.view()).unwrap();
    assert!((eps.dot(&eps) / 50.0 - 1.0).abs() < 1e-12);
    let z = with_intercept(x.view());
    assert!(max_abs(z.t().dot(&eps)) < 1e-9);
}

#[test]
fn worst_case_beats_random_directions() {
    let mut g = rng(51);
    let x = normal_matrix(&mut g, 50, 4).mapv(|v| v * v * v);
    let eps = worst_case_errors(x.view()).unwrap();
    let h = hat_matrix(with_intercept(x.view()).view()).diag().to_owned();
    let best = worst_case_objective_oracle(&h, &eps, 10);
    assert!(best >= random_search(&mut g, x.view(), 10, 10_000));
    assert!((worst_case_objective(h.view(), eps.view(), 10) - best).abs() < 1e-14);
}

#[test]
fn worst_case_matches_projected_gradient() {
    let mut g = rng(52);
    let x = normal_matrix(&mut g, 30, 3).mapv(|v| v * v * v);
    let eps = worst_case_errors(x.view()).unwrap();
    let h = hat_matrix(with_intercept(x.view()).view()).diag().to_owned();
    let best = worst_case_objective_oracle(&h, &eps, 10);
    let pg = projected_gradient(&mut g, x.view(), 10, 5000);
    assert!((best - pg).abs() <= 1e-6 * best, "{best} vs {pg}");
}

#[test]
fn balanced_design_has_no_worst_case() {
    // every unit has the same leverage
    let x = Array1::from_shape_fn(20, |i| if i % 2 == 0 { 1.0 } else { -1.0 }).insert_axis(ndarray::Axis(1));
    assert!(matches!(worst_case_errors(x.view()), Err(Error::DegenerateObjective)));
}

#[test]
fn dgp_nests_columns_and_shares_normal_errors() {
    let mut cfg = small();
    let a = build_dgp(&cfg, 3).unwrap();
    let b = build_dgp(&cfg, 6).unwrap();
    let dgp = Dgp::new(&cfg).unwrap();
    // stored covariates are centered; compare the raw draws
    assert_eq!(dgp.covariates().slice(s![.., ..3]).ncols(), 3);
    let raw = dgp.covariates();
    for j in 0..3 {
        let mean = raw.column(j).mean().unwrap();
        for i in 0..80 {
            assert!((a.covariates()[[i, j]] - (raw[[i, j]] - mean)).abs() < 1e-12);
            assert!((b.covariates()[[i, j]] - a.covariates()[[i, j]]).abs() < 1e-12);
        }
    }
    assert_eq!(build_dgp(&cfg, 3).unwrap().y1(), a.y1());
    cfg.error_kind = ErrorKind::Normal;
    let n = build_dgp(&cfg, 3).unwrap();
    let gap = &n.y1() - &n.y0();
    assert!(gap.iter().all(|&v| v == 0.0));
    cfg.error_kind = ErrorKind::Worst;
    let w = build_dgp(&cfg, 3).unwrap();
    let signal = raw.slice(s![.., ..3]).dot(&dgp.coefficients().slice(s![..3]));
    let e0 = &w.y0() - &signal;
    let e1 = &w.y1() - &signal;
    assert!(max_abs((&e1 - &(&e0 * 2.0)).into_iter()) < 1e-10);
}

#[test]
fn invalid_configs_name_the_key() {
    for (cfg, key) in [
        (SimConfig { reps: 0, ..small() }, "reps"),
        (SimConfig { n: 81, ..small() }, "pi1"),
        (SimConfig { p_grid: vec![19], ..small() }, "p_grid"),
        (SimConfig { p_grid: vec![], ..small() }, "p_grid"),
        (SimConfig { ci_level: 1.0, ..small() }, "ci_level"),
        (SimConfig { estimators: vec![], ..small() }, "estimators"),
        (SimConfig { df: 0, ..small() }, "df"),
    ] {
        match cfg.validate() {
            Err(Error::InvalidConfig(msg)) => assert!(msg.starts_with(key), "{msg}"),
            other => panic!("expected InvalidConfig for {key}, got {other:?}"),
        }
    }
}

#[test]
fn zero_residual_population_has_no_bias() {
    let cfg = SimConfig {
        estimators: EstimatorId::ALL.to_vec(),
        ..small()
    };
    let dgp = Dgp::new(&cfg).unwrap();
    let x = dgp.covariates().slice(s![.., ..3]).to_owned();
    let signal = x.dot(&dgp.coefficients().slice(s![..3]));
    let pop = FinitePopulation::new(&signal + 1.5, signal.clone(), x, cfg.n1()).unwrap();
    let rows = simulate_population(&cfg, 3, &pop, None).unwrap();
    for row in &rows {
        assert_eq!(row.failures, 0);
        assert_eq!(row.relative_bias, None, "sigma_L is zero");
        if let Some(c) = row.coverage {
            assert!((0.0..=1.0).contains(&c));
        }
        match row.estimator {
            EstimatorId::Adj | EstimatorId::Bc | EstimatorId::Cf => {
                assert!(row.bias.unwrap().abs() < 1e-12, "{:?}", row);
                assert!(row.sd.unwrap() < 1e-12);
            }
            _ => assert!(row.bias.unwrap().is_finite()),
        }
    }
}

#[test]
fn rows_cover_every_combination() {
    let cfg = small();
    let result = run_monte_carlo_with_threads(&cfg, Some(2)).unwrap();
    assert_eq!(result.rows.len(), cfg.p_grid.len() * cfg.estimators.len() * cfg.se_methods.len());
    for row in &result.rows {
        assert_eq!(row.reps, 60);
        assert!(row.sd.unwrap() >= 0.0);
        let c = row.coverage.unwrap();
        assert!((0.0..=1.0).contains(&c));
        if row.estimator == EstimatorId::Cf {
            assert_eq!(row.sd_ratio_vs_cf, Some(1.0));
        }
    }
    let csv = result.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), SIM_RESULT_COLUMNS.join(","));
    for line in lines {
        assert_eq!(line.split(',').count(), SIM_RESULT_COLUMNS.len());
        assert!(line.starts_with("worst_t3,3,worst,"));
    }
    assert!(csv.ends_with('\n') && !csv.contains('\r'));
}

#[test]
fn byte_identical_across_worker_counts() {
    let cfg = SimConfig { estimators: EstimatorId::ALL.to_vec(), ..small() };
    let reference = run_monte_carlo_with_threads(&cfg, Some(1)).unwrap().to_csv();
    for threads in [2, 8] {
        assert_eq!(run_monte_carlo_with_threads(&cfg, Some(threads)).unwrap().to_csv(), reference);
    }
}

#[test]
fn seeds_change_results() {
    let a = run_monte_carlo_with_threads(&small(), Some(2)).unwrap();
    let b = run_monte_carlo_with_threads(&SimConfig { master_seed: 6, ..small() }, Some(2)).unwrap();
    assert_ne!(a.to_csv(), b.to_csv());
}

#[test]
fn difference_in_means_uses_plain_standard_errors() {
    let cfg = SimConfig {
        estimators: vec![EstimatorId::Dif, EstimatorId::Cf],
        se_methods: vec![VarianceMethod::Hc0, VarianceMethod::Hc3],
        error_kind: ErrorKind::Normal,
        ..small()
    };
    let result = run_monte_carlo_with_threads(&cfg, Some(2)).unwrap();
    let mean_se = |est, m| {
        result
            .rows
            .iter()
            .find(|r| r.p == 6 && r.estimator == est && r.se_method == Some(m))
            .unwrap()
            .mean_se
            .unwrap()
    };
    // covariates explain most of the outcome, so the unadjusted SE is larger
    assert!(mean_se(EstimatorId::Dif, VarianceMethod::Hc0) > mean_se(EstimatorId::Cf, VarianceMethod::Hc0));
}

#[test]
fn json_round_trips() {
    let result = run_monte_carlo_with_threads(&small(), Some(2)).unwrap();
    let back: designbench::SimResult = serde_json::from_str(&result.to_json()).unwrap();
    assert_eq!(back, result);
    let dir = std::env::temp_dir().join(format!("designbench-sim-{}", std::process::id()));
    let (csv, json) = result.write_files(&dir).unwrap();
    assert_eq!(std::fs::read_to_string(csv).unwrap(), result.to_csv());
    assert!(json.ends_with("simresult_worst_t3.json"));
    std::fs::remove_dir_all(dir).unwrap();
}
