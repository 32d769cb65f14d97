//! Nash fixed points, the worthless-competitor degeneracy, PDE residuals
//! and monotonicity scans.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use relperf::criteria::{compute_a_m, AtomicMeasure, ForwardUtility, HeatFunction};
use relperf::market::{CoefficientModel, CorrelationSpec, RngSeed, TimeGrid};
use relperf::strategies::{best_response_div, nash_div, nash_spec, worthless_competitor};
use relperf::verify::{
    eta_positive_root, market_for_path, monotonicity_check_div, nash_fixed_point_check,
    nonmonotonicity_witness_div, nonmonotonicity_witness_spec, pde_residual_spec,
};
use relperf::wealth::{modified_sharpe_div, realize_strategy, StrategyPath, StrategySpec};
use relperf::{CompetitionParams, Manager};

fn market_from(
    rho: f64,
    lambda: [f64; 2],
    sigma: [f64; 2],
    seed: u64,
) -> relperf::market::MarketPath {
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let corr = CorrelationSpec::new(rho).unwrap();
    let mu = [lambda[0] * sigma[0] + 0.01, lambda[1] * sigma[1] + 0.01];
    let model = CoefficientModel::constant(mu, sigma, 0.01);
    market_for_path(&model, &corr, &grid, RngSeed::new(seed), 0).unwrap()
}

#[test]
fn nash_fixed_points_over_random_parameter_draws() {
    let mut rng = ChaCha12Rng::seed_from_u64(20260810);
    let mut checked = 0;
    while checked < 20 {
        let rho: f64 = rng.random_range(-0.85..0.85);
        let gamma1: f64 = rng.random_range(0.3..5.0);
        let gamma2: f64 = rng.random_range(0.3..5.0);
        if (gamma1 - 1.0).abs() < 0.05 || (gamma2 - 1.0).abs() < 0.05 {
            continue;
        }
        let theta1: f64 = rng.random_range(0.05..1.0);
        let theta2: f64 = rng.random_range(0.05..1.0);
        let lambda = [rng.random_range(0.1..0.5), rng.random_range(0.1..0.5)];
        let sigma = [rng.random_range(0.1..0.5), rng.random_range(0.1..0.5)];
        let params = CompetitionParams::new(theta1, theta2).unwrap();
        let market = market_from(rho, lambda, sigma, checked as u64);

        let det_spec =
            gamma1 * gamma2 - rho * rho * theta1 * theta2 * (1.0 - gamma1) * (1.0 - gamma2);
        let det_div = gamma1 * gamma2 - theta1 * theta2 * (1.0 - gamma1) * (1.0 - gamma2);
        if det_spec.abs() <= 0.1 || det_div.abs() <= 0.1 {
            continue;
        }

        let spec = nash_spec(&market, gamma1, gamma2, &params, 1.0, 1.0).unwrap();
        let dev = nash_fixed_point_check(&market, &params, gamma1, gamma2, &spec).unwrap();
        assert!(dev < 1e-12, "specialization deviation {dev}");

        let div = nash_div(&market, gamma1, gamma2, &params, 1.0, 1.0).unwrap();
        let dev = nash_fixed_point_check(&market, &params, gamma1, gamma2, &div).unwrap();
        assert!(dev < 1e-12, "diversification deviation {dev}");
        checked += 1;
    }
}

#[test]
fn broken_consistency_is_detected() {
    // Negative control: evaluate the fixed-point residual with a theta
    // that differs from the one the equilibrium was built for.
    let market = market_from(0.4, [0.3, 0.25], [0.2, 0.25], 7);
    let params = CompetitionParams::new(0.6, 0.6).unwrap();
    let out = nash_spec(&market, 2.0, 3.0, &params, 1.0, 1.0).unwrap();
    let skewed = CompetitionParams::new(0.6, 0.2).unwrap();
    let dev = nash_fixed_point_check(&market, &skewed, 2.0, 3.0, &out).unwrap();
    assert!(dev > 1e-6, "deviation should be visible, got {dev}");
}

#[test]
fn rho_zero_equilibrium_matches_no_competition_exactly() {
    let market = market_from(0.0, [0.3, 0.2], [0.2, 0.25], 3);
    let params = CompetitionParams::new(0.9, 0.4).unwrap();
    let out = nash_spec(&market, 2.0, 3.0, &params, 1.0, 1.0).unwrap();
    for k in 0..market.len() {
        assert_eq!(
            out.alpha.scalar().unwrap()[k],
            market.lambda1[k] / (2.0 * market.sigma1[k])
        );
        assert_eq!(
            out.beta.scalar().unwrap()[k],
            market.lambda2[k] / (3.0 * market.sigma2[k])
        );
    }
}

#[test]
fn worthless_competitor_degeneracy() {
    let market = market_from(0.3, [0.3, 0.3], [0.2, 0.2], 11);
    let theta = 0.5;
    let beta0 = worthless_competitor(&market, theta).unwrap();
    let sharpe = modified_sharpe_div(&market, &beta0, theta, Manager::One).unwrap();
    let (a, m) = compute_a_m(&sharpe, &market).unwrap();
    for k in 0..market.len() {
        assert!(a.values[k].abs() <= 1e-12 && m.values[k].abs() <= 1e-12);
    }
    // closed-form value is frozen at its initial level
    let h = HeatFunction::new(AtomicMeasure::dirac_crra(2.0).unwrap());
    let u = ForwardUtility::new(h.clone()).unwrap();
    let c =
        relperf::wealth::competition_quadratic(&market.sigma1, &market.sigma2, market.rho, &beta0)
            .unwrap();
    let b = relperf::criteria::compute_b(theta, &c, &market.grid).unwrap();
    let opt =
        relperf::criteria::optimal_relative_wealth_div(&h, 1.0, &a, &m, &b, Manager::One).unwrap();
    let v0 = u.u(1.0, 0.0).unwrap();
    for k in 0..market.len() {
        let v = relperf::criteria::forward_value_div(&u, opt.values[k], a.values[k], b.values[k])
            .unwrap();
        assert!((v - v0).abs() <= 1e-10 * v0.abs(), "node {k}: {v} vs {v0}");
        // optimal wealth reduces to B * x0
        assert!((opt.values[k] - b.values[k]).abs() <= 1e-10 * b.values[k]);
    }
    // optimal policy follows fraction theta of the worthless strategy, bit-exact
    let h_path = vec![0.5; market.len()];
    let alpha = best_response_div(&market, &beta0, theta, &h_path, Manager::One).unwrap();
    for k in 0..market.len() {
        for i in 0..2 {
            assert_eq!(
                alpha.pair().unwrap()[k][i],
                theta * beta0.pair().unwrap()[k][i]
            );
        }
    }
}

#[test]
fn pde_residual_for_the_closed_form_and_negative_control() {
    let market = market_from(0.3, [0.3, 0.3], [0.2, 0.2], 13);
    let beta = StrategyPath::constant_scalar(market.len(), 0.8);
    let z_grid: Vec<f64> = (1..=50).map(|i| 0.1 * i as f64).collect();
    let ok = pde_residual_spec(&market, &beta, 0.5, 2.0, &z_grid, None).unwrap();
    assert!(ok.max_normalized < 1e-10, "residual {}", ok.max_normalized);

    let bad = pde_residual_spec(&market, &beta, 0.5, 2.0, &z_grid, Some(2.2)).unwrap();
    assert!(
        bad.max_normalized > 1e-3,
        "control residual {}",
        bad.max_normalized
    );

    // no-competition reduction: theta = 0 with beta = 0 collapses the PDE to
    // the classical time-monotone flow and the closed form still solves it.
    let zero = StrategyPath::constant_scalar(market.len(), 0.0);
    let plain = pde_residual_spec(&market, &zero, 0.0, 2.0, &z_grid, None).unwrap();
    assert!(plain.max_normalized < 1e-10);
}

#[test]
fn specialization_witness_follows_the_eta_root() {
    // gamma and theta chosen so the exponent's parabola opens downward:
    // a schedule crossing the positive root flips the sign of dV/dt.
    let market = market_from(0.3, [0.3, 0.3], [0.2, 0.2], 17);
    let (gamma, theta) = (3.0, 1.0);
    let root = eta_positive_root(0.3, 0.3, 0.2, 0.3, theta, gamma).expect("root exists");
    let ramp = realize_strategy(
        &StrategySpec::TimeAffineScalar {
            base: 0.0,
            slope: 2.0 * root,
        },
        &market,
    );
    let witness = nonmonotonicity_witness_spec(&market, &ramp, theta, gamma)
        .unwrap()
        .expect("sign change expected");
    // the witness node sits where the ramp crosses the root
    let t_cross = market.grid.t(witness);
    assert!(
        (t_cross - 0.5).abs() <= 0.1,
        "witness at t = {t_cross}, expected near 0.5"
    );
    // idle competitor: eta = lambda^2 > 0, no witness
    let zero = StrategyPath::constant_scalar(market.len(), 0.0);
    assert!(nonmonotonicity_witness_spec(&market, &zero, theta, gamma)
        .unwrap()
        .is_none());
}

#[test]
fn pseudo_stocks_are_driftless_in_a_worthless_market() {
    // Vanishing premia leave dS~/S~ = sigma dW; in log scale the path is
    // exactly -sigma^2 t / 2 + sigma W.
    let market = market_from(0.3, [0.3, 0.3], [0.2, 0.2], 23);
    let beta0 = worthless_competitor(&market, 0.5).unwrap();
    let (s1, s2) = relperf::wealth::pseudo_stock_paths(
        &market,
        &beta0,
        0.5,
        Manager::One,
        relperf::Setting::Diversification,
    )
    .unwrap();
    for k in 0..market.len() {
        let t = market.grid.t(k);
        let expect1 = (-0.5 * 0.04 * t + 0.2 * market.w1[k]).exp();
        let expect2 = (-0.5 * 0.04 * t + 0.2 * market.w2[k]).exp();
        assert!((s1[k] - expect1).abs() <= 1e-12 * expect1);
        assert!((s2[k] - expect2).abs() <= 1e-12 * expect2);
    }
}

#[test]
fn endowment_reconstruction_for_manager_two() {
    let market = market_from(0.4, [0.3, 0.25], [0.2, 0.25], 29);
    let params = CompetitionParams::new(0.5, 0.7).unwrap();

    let alpha = StrategyPath::constant_scalar(market.len(), 0.9);
    let beta = StrategyPath::constant_scalar(market.len(), 0.4);
    let direct = relperf::wealth::evolve_relative_spec(
        &market,
        &alpha,
        &beta,
        &params,
        1.0,
        Manager::Two,
    )
    .unwrap();
    let rebuilt = relperf::wealth::evolve_relative_via_endowment(
        &market,
        &beta,
        &alpha,
        &params,
        1.0,
        Manager::Two,
        relperf::Setting::Specialization,
    )
    .unwrap();
    for k in 0..market.len() {
        assert!((direct.values[k] - rebuilt.values[k]).abs() <= 1e-12 * direct.values[k]);
    }

    let alpha2 = StrategyPath::constant_pair(market.len(), [0.6, 0.3]);
    let beta2 = StrategyPath::constant_pair(market.len(), [0.2, 0.7]);
    let direct = relperf::wealth::evolve_relative_div(
        &market,
        &alpha2,
        &beta2,
        &params,
        1.0,
        Manager::Two,
    )
    .unwrap();
    let rebuilt = relperf::wealth::evolve_relative_via_endowment(
        &market,
        &beta2,
        &alpha2,
        &params,
        1.0,
        Manager::Two,
        relperf::Setting::Diversification,
    )
    .unwrap();
    for k in 0..market.len() {
        assert!((direct.values[k] - rebuilt.values[k]).abs() <= 1e-12 * direct.values[k]);
    }
}

#[test]
fn diversification_value_is_time_decreasing() {
    let market = market_from(0.3, [0.3, 0.3], [0.2, 0.2], 19);
    let h = HeatFunction::new(AtomicMeasure::dirac_crra(2.0).unwrap());
    let u = ForwardUtility::new(h).unwrap();
    let x_grid: Vec<f64> = (1..=20).map(|i| 0.25 * i as f64).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    for _ in 0..5 {
        let beta = StrategyPath::constant_pair(
            market.len(),
            [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        );
        let report = monotonicity_check_div(&u, &market, &beta, 0.5, &x_grid).unwrap();
        assert!(
            report.strictly_decreasing,
            "worst step {}",
            report.worst_step
        );
        // the witness scanner agrees
        assert!(nonmonotonicity_witness_div(&u, &market, &beta, 0.5, 1.0)
            .unwrap()
            .is_none());
    }
}
