//! Grid-scan oracles for the closed-form solver.
//!
//! The oracle maximizes `min_theta E[u]` over a dense control grid using only
//! `analytic_expected_utility` and the extreme points of the uncertainty
//! sets. It never touches the solver's strategy/rate formulas, so agreement
//! certifies them independently.

use nalgebra::{DMatrix, DVector};
use robust_merton::{
    analytic_expected_utility, saddle_point_scan, solve, theta_candidates, DriftSet, PiGridSpec,
    Scenario, UncertaintyCell, UncertaintySchedule, UtilitySpec, VolSet,
};

fn canonical(utility: UtilitySpec) -> Scenario {
    Scenario {
        r: 0.0,
        x0: 1.0,
        utility,
        schedule: UncertaintySchedule::new(
            1,
            vec![UncertaintyCell::new(
                0.0,
                1.0,
                DriftSet::interval(0.05, 0.10),
                VolSet::new(0.04, 0.09),
            )],
        ),
    }
}

/// 1-D maximin oracle: pi on [-2, 2] step 1e-3, adversary restricted to the
/// extreme corners (mu, C) of the canonical cell.
fn oracle_maximin(utility: &UtilitySpec, x: f64, r: f64, horizon: f64) -> (f64, f64) {
    let extremes = [(0.05, 0.04), (0.05, 0.09), (0.10, 0.04), (0.10, 0.09)];
    let mut best_pi = f64::NAN;
    let mut best_val = f64::NEG_INFINITY;
    let steps = (4.0 / 1e-3_f64).round() as usize;
    for i in 0..=steps {
        let pi = -2.0 + i as f64 * 1e-3;
        let pi_vec = DVector::from_element(1, pi);
        let worst = extremes
            .iter()
            .map(|&(mu, c)| {
                analytic_expected_utility(
                    &pi_vec,
                    &DVector::from_element(1, mu),
                    &DMatrix::from_element(1, 1, c),
                    horizon,
                    x,
                    r,
                    utility,
                )
                .unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        if worst > best_val {
            best_val = worst;
            best_pi = pi;
        }
    }
    (best_pi, best_val)
}

/// Backs the per-cell rate out of an oracle value.
fn rate_from_value(utility: &UtilitySpec, value: f64, x: f64, horizon: f64) -> f64 {
    match *utility {
        UtilitySpec::Log => (value - x.ln()) / horizon,
        UtilitySpec::Power { gamma } => (value / x.powf(gamma)).ln() / horizon,
        UtilitySpec::Exponential { beta } => {
            -(value / (-beta * (-beta * x).exp())).ln() / horizon
        }
    }
}

#[test]
fn log_strategy_and_rate_match_grid_oracle() {
    let solution = solve(&canonical(UtilitySpec::Log)).unwrap();
    let (pi_oracle, val_oracle) = oracle_maximin(&UtilitySpec::Log, 1.0, 0.0, 1.0);
    let cell = &solution.cells[0];
    assert!(
        (cell.strategy[0] - pi_oracle).abs() <= 1e-3,
        "pi* {} vs oracle {pi_oracle}",
        cell.strategy[0]
    );
    let rate_oracle = rate_from_value(&UtilitySpec::Log, val_oracle, 1.0, 1.0);
    assert!(
        (cell.rate - rate_oracle).abs() <= 1e-6,
        "rate {} vs oracle {rate_oracle}",
        cell.rate
    );
    // Frozen values for the canonical cell.
    assert!((cell.strategy[0] - 0.5555555555555556).abs() < 1e-15);
    assert!((cell.rate - 0.013888888888888888).abs() < 1e-15);
}

#[test]
fn power_strategy_and_rate_match_grid_oracle() {
    let utility = UtilitySpec::Power { gamma: 0.5 };
    let solution = solve(&canonical(utility)).unwrap();
    let (pi_oracle, val_oracle) = oracle_maximin(&utility, 1.0, 0.0, 1.0);
    let cell = &solution.cells[0];
    assert!((cell.strategy[0] - pi_oracle).abs() <= 1e-3);
    assert!((cell.strategy[0] - 1.1111111111111112).abs() < 1e-15);
    let rate_oracle = rate_from_value(&utility, val_oracle, 1.0, 1.0);
    assert!(
        (cell.rate - rate_oracle).abs() <= 1e-6,
        "rate {} vs oracle {rate_oracle}",
        cell.rate
    );
}

#[test]
fn exponential_strategy_and_rate_match_grid_oracle() {
    let utility = UtilitySpec::Exponential { beta: 1.0 };
    let solution = solve(&canonical(utility)).unwrap();
    let (pi_oracle, val_oracle) = oracle_maximin(&utility, 1.0, 0.0, 1.0);
    let cell = &solution.cells[0];
    assert!((cell.strategy[0] - pi_oracle).abs() <= 1e-3);
    let rate_oracle = rate_from_value(&utility, val_oracle, 1.0, 1.0);
    assert!((cell.rate - rate_oracle).abs() <= 1e-6);
    // Value at (0, 1): -e^{-1} e^{-kappa}, frozen from the direct evaluation.
    let v = solution.value_at(0.0, 1.0).unwrap();
    assert!((v - (-0.3628053229870513)).abs() < 1e-14);
}

#[test]
fn monte_carlo_cross_checks_log_value() {
    // Independent of both solver and analytic formula: estimate E[log X_T]
    // under (pi*, mu*, Sigma*) by simulation and compare to value_at.
    use robust_merton::{estimate_expected_utility, simulate_wealth_fraction, ParameterPath, PathConfig};
    let solution = solve(&canonical(UtilitySpec::Log)).unwrap();
    let path = ParameterPath::worst_case(&solution);
    let policy = solution.optimal_policy(0.0, 1.0).unwrap();
    let config = PathConfig::new(100_000, 8, 0xC0FFEE);
    let wealth = simulate_wealth_fraction(&path, &policy, 1.0, 0.0, &config).unwrap();
    let est = estimate_expected_utility(&wealth, &UtilitySpec::Log, config.seed).unwrap();
    let v = solution.value_at(0.0, 1.0).unwrap();
    assert!(
        (est.mean - v).abs() <= 3.0 * est.std_error,
        "MC {} +- {} vs analytic {v}",
        est.mean,
        est.std_error
    );
}

#[test]
fn saddle_scan_finds_canonical_saddle_point_for_log() {
    let scenario = canonical(UtilitySpec::Log);
    let cell = &scenario.schedule.cells[0];
    let candidates = theta_candidates(cell, 0.0, 50, 2024).unwrap();
    let grid = PiGridSpec::symmetric(1, 2.0, 4001);
    let report =
        saddle_point_scan(cell, 0.0, 1.0, &UtilitySpec::Log, &grid, &candidates, 10).unwrap();
    assert!((report.arg_pi[0] - 0.5555555555555556).abs() <= report.grid.final_step);
    assert!((report.arg_mu[0] - 0.05).abs() < 1e-12);
    assert!((report.arg_sigma[(0, 0)] - 0.09).abs() < 1e-12);
    assert!(report.gap.abs() <= 1e-8, "gap {}", report.gap);
    assert!(report.gap >= -1e-12);
}

#[test]
fn saddle_scan_with_drift_set_containing_r_parks_at_zero() {
    let cell = UncertaintyCell::new(
        0.0,
        1.0,
        DriftSet::interval(-0.05, 0.05),
        VolSet::new(0.04, 0.09),
    );
    let r = 0.02;
    let candidates = theta_candidates(&cell, r, 50, 7).unwrap();
    let grid = PiGridSpec::symmetric(1, 2.0, 2001);
    let report =
        saddle_point_scan(&cell, r, 1.0, &UtilitySpec::Log, &grid, &candidates, 10).unwrap();
    assert!(report.arg_pi[0].abs() <= 2e-3, "arg_pi {}", report.arg_pi[0]);
    // Value collapses to u(x0) = log(1) = 0.
    assert!(report.maximin.abs() <= 1e-8);
}

#[test]
fn value_agrees_with_analytic_expected_utility_on_random_single_cells() {
    // Oracle-agreement invariant: over one cell the analytic expectation at
    // (pi*, mu*, Sigma*) is the value function, to 1e-12 relative.
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    for case in 0..100 {
        let d = rng.gen_range(1..=3);
        let r = rng.gen_range(-0.02..0.05);
        let horizon = rng.gen_range(0.25..3.0);
        let x0 = rng.gen_range(0.2..5.0);
        let drift = if rng.gen_bool(0.5) {
            let lower = DVector::from_fn(d, |_, _| rng.gen_range(-0.05..0.08));
            let width = DVector::from_fn(d, |_, _| rng.gen_range(0.0..0.1));
            DriftSet::Box { lower: lower.clone(), upper: lower + width }
        } else {
            DriftSet::Ball {
                center: DVector::from_fn(d, |_, _| rng.gen_range(-0.05..0.1)),
                radius: rng.gen_range(0.0..0.08),
            }
        };
        let eig_min = rng.gen_range(0.005..0.2);
        let eig_max = eig_min + rng.gen_range(0.0..0.3);
        let utility = match case % 3 {
            0 => UtilitySpec::Log,
            1 => UtilitySpec::Power { gamma: rng.gen_range(0.05..0.95) },
            _ => UtilitySpec::Exponential { beta: rng.gen_range(0.2..3.0) },
        };
        let scenario = Scenario {
            r,
            x0,
            utility,
            schedule: UncertaintySchedule::new(
                d,
                vec![UncertaintyCell::new(0.0, horizon, drift, VolSet::new(eig_min, eig_max))],
            ),
        };
        let solution = solve(&scenario).unwrap();
        let cell = &solution.cells[0];
        let analytic = analytic_expected_utility(
            &cell.strategy,
            &cell.mu_star,
            &cell.sigma_star,
            horizon,
            x0,
            r,
            &utility,
        )
        .unwrap();
        let value = solution.value_at(0.0, x0).unwrap();
        let rel = (analytic - value).abs() / value.abs().max(1e-300);
        assert!(rel <= 1e-12, "case {case}: {analytic} vs {value} (rel {rel})");
    }
}

#[test]
fn worst_case_certification_over_theta_candidates() {
    // min over theta candidates of E[u] at pi* is attained at (mu*, Sigma*).
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    for case in 0..30 {
        let d = rng.gen_range(1..=2);
        let r = rng.gen_range(-0.01..0.04);
        let lower = DVector::from_fn(d, |_, _| rng.gen_range(-0.03..0.06));
        let width = DVector::from_fn(d, |_, _| rng.gen_range(0.0..0.08));
        let eig_min = rng.gen_range(0.01..0.1);
        let cell = UncertaintyCell::new(
            0.0,
            rng.gen_range(0.5..2.0),
            DriftSet::Box { lower: lower.clone(), upper: lower + width },
            VolSet::new(eig_min, eig_min + rng.gen_range(0.0..0.2)),
        );
        let utility = match case % 3 {
            0 => UtilitySpec::Log,
            1 => UtilitySpec::Power { gamma: 0.4 },
            _ => UtilitySpec::Exponential { beta: 1.5 },
        };
        let scenario = Scenario {
            r,
            x0: 1.0,
            utility,
            schedule: UncertaintySchedule::new(d, vec![cell.clone()]),
        };
        let solution = solve(&scenario).unwrap();
        let sol_cell = &solution.cells[0];
        let horizon = cell.duration();
        let at = |mu: &DVector<f64>, sigma: &DMatrix<f64>| {
            analytic_expected_utility(&sol_cell.strategy, mu, sigma, horizon, 1.0, r, &utility)
                .unwrap()
        };
        let star = at(&sol_cell.mu_star, &sol_cell.sigma_star);
        let candidates = theta_candidates(&cell, r, 50, 1000 + case).unwrap();
        for theta in &candidates {
            let v = at(&theta.mu, &theta.sigma);
            assert!(
                star <= v + 1e-12 * v.abs().max(1.0),
                "case {case}: candidate beats the certified worst case: {v} < {star}"
            );
        }
    }
}

#[test]
fn best_response_certification_against_worst_case_theta() {
    // With theta fixed at (mu*, Sigma*), the analytic strategy maximizes the
    // expected utility over the control grid.
    for utility in [
        UtilitySpec::Log,
        UtilitySpec::Power { gamma: 0.5 },
        UtilitySpec::Exponential { beta: 1.0 },
    ] {
        let scenario = canonical(utility);
        let cell = &scenario.schedule.cells[0];
        let solution = solve(&scenario).unwrap();
        let sol_cell = &solution.cells[0];
        let single = [robust_merton::ThetaCandidate {
            mu: sol_cell.mu_star.clone(),
            sigma: sol_cell.sigma_star.clone(),
        }];
        let grid = PiGridSpec::symmetric(1, 2.5, 2001);
        let report = saddle_point_scan(cell, 0.0, 1.0, &utility, &grid, &single, 10).unwrap();
        assert!(
            (report.arg_pi[0] - sol_cell.strategy[0]).abs() <= report.grid.final_step,
            "{utility:?}: best response {} vs analytic {}",
            report.arg_pi[0],
            sol_cell.strategy[0]
        );
    }
}
