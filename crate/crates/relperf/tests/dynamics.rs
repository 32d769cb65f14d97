//! Monte Carlo dynamics checks: martingale/supermartingale behavior of the
//! closed-form criteria along simulated paths, drift adjudication of the
//! manager-2 exponent, the log-case compensator sign, and strong-convergence
//! orders of the discretizations.

use relperf::criteria::{compute_a_m, compute_b, AtomicMeasure, ForwardUtility, HeatFunction};
use relperf::market::{CoefficientModel, CorrelationSpec, Driver, RngSeed, TimeGrid};
use relperf::strategies::{best_response_spec, crra_value_spec, eta_spec, log_value_spec, EtaForm};
use relperf::verify::{
    collect_path_stats, market_for_path, martingale_test, paired_suboptimality_test,
    value_path_stats, wealth_strong_order, PathStats,
};
use relperf::wealth::{
    competition_quadratic, evolve_relative_div, evolve_relative_spec, modified_sharpe_div,
    realize_strategy, StrategyPath, StrategySpec,
};
use relperf::{CompetitionParams, Manager, Result};

const N_PATHS: usize = 2000;

fn scenario() -> (
    TimeGrid,
    CorrelationSpec,
    CoefficientModel,
    CompetitionParams,
) {
    let grid = TimeGrid::uniform(1.0, 200).unwrap();
    let corr = CorrelationSpec::new(0.3).unwrap();
    let model = CoefficientModel::constant([0.07, 0.07], [0.2, 0.2], 0.01);
    let params = CompetitionParams::new(0.5, 0.5).unwrap();
    (grid, corr, model, params)
}

/// One specialization path of manager 1's best-response value, optionally
/// with a perturbed own strategy. Returns (stats, terminal of optimal,
/// terminal of perturbed).
fn spec_value_path(idx: u64, gamma: f64, perturbation: f64) -> Result<(PathStats, f64, f64)> {
    let (grid, corr, model, params) = scenario();
    let market = market_for_path(&model, &corr, &grid, RngSeed::new(2024), idx)?;
    let beta = StrategyPath::constant_scalar(market.len(), 0.8);
    let alpha_star = best_response_spec(&market, &beta, params.theta1, gamma, Manager::One)?;
    let eta = eta_spec(
        &market,
        &beta,
        params.theta1,
        gamma,
        Manager::One,
        EtaForm::Direct,
    )?;

    let x_star = evolve_relative_spec(&market, &alpha_star, &beta, &params, 1.0, Manager::One)?;
    let v_star = crra_value_spec(&x_star.values, &market, &eta, gamma)?;
    let stats = value_path_stats(market.grid.times(), &v_star.values);

    let shifted = StrategyPath::Scalar(
        alpha_star
            .scalar()?
            .iter()
            .map(|a| a + perturbation)
            .collect(),
    );
    let x_sub = evolve_relative_spec(&market, &shifted, &beta, &params, 1.0, Manager::One)?;
    let v_sub = crra_value_spec(&x_sub.values, &market, &eta, gamma)?;
    Ok((
        stats,
        *v_star.values.last().unwrap(),
        *v_sub.values.last().unwrap(),
    ))
}

#[test]
fn crra_best_response_value_is_martingale_consistent() {
    let stats = collect_path_stats(N_PATHS, |idx| Ok(spec_value_path(idx, 2.0, 0.0)?.0)).unwrap();
    let report = martingale_test(&stats, 3.0).unwrap();
    assert!(
        report.martingale_consistent,
        "mean {} vs v0 {} (se {})",
        report.terminal_mean, report.v0, report.terminal_se
    );
    assert!(
        report.drift_slope.abs() <= 3.0 * report.drift_slope_se,
        "drift slope {} se {}",
        report.drift_slope,
        report.drift_slope_se
    );
}

#[test]
fn perturbed_strategy_is_strictly_supermartingale() {
    let results: Vec<(f64, f64)> = (0..N_PATHS)
        .map(|i| {
            let (_, opt, sub) = spec_value_path(i as u64, 2.0, 0.5).unwrap();
            (opt, sub)
        })
        .collect();
    let opt: Vec<f64> = results.iter().map(|r| r.0).collect();
    let sub: Vec<f64> = results.iter().map(|r| r.1).collect();
    let v0 = 1.0f64.powf(-1.0) / (1.0 - 2.0);
    let report = paired_suboptimality_test(&opt, &sub, v0, 3.0).unwrap();
    assert!(
        report.strictly_below,
        "deficit {} se {}",
        report.deficit_mean, report.deficit_se
    );
    // and still supermartingale-consistent in the raw sense
    assert!(report.raw_mean <= v0 + 3.0 * report.raw_se);
}

#[test]
fn manager_two_value_is_martingale_consistent() {
    // Adjudicates the symmetric cross term of the manager-2 exponent: the
    // best-response value V2(X~2*, t) must be drift-free along alpha given.
    let gamma2 = 3.0;
    let stats = collect_path_stats(N_PATHS, |idx| {
        let (grid, corr, model, params) = scenario();
        let market = market_for_path(&model, &corr, &grid, RngSeed::new(77), idx)?;
        let alpha = StrategyPath::constant_scalar(market.len(), 0.6);
        let beta_star = best_response_spec(&market, &alpha, params.theta2, gamma2, Manager::Two)?;
        let eta2 = eta_spec(
            &market,
            &alpha,
            params.theta2,
            gamma2,
            Manager::Two,
            EtaForm::Direct,
        )?;
        let x2 = evolve_relative_spec(&market, &alpha, &beta_star, &params, 1.0, Manager::Two)?;
        let v2 = crra_value_spec(&x2.values, &market, &eta2, gamma2)?;
        Ok(value_path_stats(market.grid.times(), &v2.values))
    })
    .unwrap();
    let report = martingale_test(&stats, 3.0).unwrap();
    assert!(
        report.martingale_consistent,
        "mean {} vs v0 {} (se {})",
        report.terminal_mean, report.v0, report.terminal_se
    );
}

#[test]
fn log_value_compensator_has_martingale_sign() {
    // The additive compensator must make ln X~* - (1/2) int eta|gamma=1 ds
    // drift-free; with the opposite sign the drift would be ~ +eta, two
    // orders of magnitude beyond the standard error here.
    let stats = collect_path_stats(N_PATHS, |idx| {
        let (grid, corr, model, params) = scenario();
        let market = market_for_path(&model, &corr, &grid, RngSeed::new(99), idx)?;
        let beta = StrategyPath::constant_scalar(market.len(), 0.8);
        let (_, alpha_star) = log_value_spec(
            &vec![1.0; market.len()],
            &market,
            &beta,
            params.theta1,
            Manager::One,
        )?;
        let x_star = evolve_relative_spec(&market, &alpha_star, &beta, &params, 1.0, Manager::One)?;
        let (v, _) = log_value_spec(&x_star.values, &market, &beta, params.theta1, Manager::One)?;
        Ok(value_path_stats(market.grid.times(), &v.values))
    })
    .unwrap();
    let report = martingale_test(&stats, 3.0).unwrap();
    assert!(
        report.martingale_consistent,
        "mean {} vs v0 {} (se {})",
        report.terminal_mean, report.v0, report.terminal_se
    );
}

#[test]
fn diversification_value_is_martingale_consistent_for_mixture_measures() {
    // Closed-form optimal wealth with a two-atom criterion and a
    // state-dependent opponent: E[u(X^*/B, A)] must stay at u(x0, 0).
    let h = HeatFunction::new(
        AtomicMeasure::new(vec![
            relperf::criteria::Atom { y: 0.5, w: 1.0 },
            relperf::criteria::Atom { y: 2.0, w: 0.4 },
        ])
        .unwrap(),
    );
    let u = ForwardUtility::new(h.clone()).unwrap();
    let theta = 0.5;
    let x0 = 1.0;
    let v0 = u.u(x0, 0.0).unwrap();
    let beta_spec = StrategySpec::TanhPair {
        base: [0.4, 0.2],
        amplitude: [0.3, 0.3],
        scale: 1.0,
    };
    let stats = collect_path_stats(N_PATHS, |idx| {
        let (grid, corr, model, _) = scenario();
        let market = market_for_path(&model, &corr, &grid, RngSeed::new(555), idx)?;
        let beta = realize_strategy(&beta_spec, &market);
        let sharpe = modified_sharpe_div(&market, &beta, theta, Manager::One)?;
        let (a, m) = compute_a_m(&sharpe, &market)?;
        let c = competition_quadratic(&market.sigma1, &market.sigma2, market.rho, &beta)?;
        let b = compute_b(theta, &c, &market.grid)?;
        let opt = relperf::criteria::optimal_relative_wealth_div(&h, x0, &a, &m, &b, Manager::One)?;
        let values: Vec<f64> = (0..market.len())
            .map(|k| {
                relperf::criteria::forward_value_div(&u, opt.values[k], a.values[k], b.values[k])
            })
            .collect::<Result<_>>()?;
        Ok(value_path_stats(market.grid.times(), &values))
    })
    .unwrap();
    let report = martingale_test(&stats, 3.0).unwrap();
    assert!(
        report.martingale_consistent,
        "mean {} vs v0 {v0} (se {})",
        report.terminal_mean, report.terminal_se
    );
}

#[test]
fn wealth_euler_strong_order_is_one_half() {
    // State-dependent strategy so the scheme has genuine discretization
    // error against the fine-grid reference.
    let model = CoefficientModel::constant([0.07, 0.07], [0.2, 0.2], 0.01);
    let corr = CorrelationSpec::new(0.0).unwrap();
    let spec = StrategySpec::TanhScalar {
        base: 0.8,
        amplitude: 0.6,
        scale: 2.0,
        driver: Driver::W1,
    };
    let report = wealth_strong_order(
        &model,
        &corr,
        &spec,
        1.0,
        1.0,
        &[0.02, 0.01, 0.005],
        16,
        RngSeed::new(4242),
        200,
    )
    .unwrap();
    assert!(
        report.order >= 0.4 && report.order <= 0.6,
        "order {} errors {:?}",
        report.order,
        report.errors
    );
}

#[test]
fn relative_wealth_ratio_consistency_order() {
    // X~ evolved directly at coarse steps against the wealth-ratio
    // construction on a 16x finer grid: the sup-norm gap closes at the
    // Euler strong rate.
    let model = CoefficientModel::constant([0.07, 0.07], [0.2, 0.2], 0.01);
    let corr = CorrelationSpec::new(0.3).unwrap();
    let params = CompetitionParams::new(0.7, 0.5).unwrap();
    let alpha_spec = StrategySpec::TanhScalar {
        base: 0.8,
        amplitude: 0.5,
        scale: 2.0,
        driver: Driver::W1,
    };
    let beta_spec = StrategySpec::TanhScalar {
        base: 0.5,
        amplitude: 0.4,
        scale: 2.0,
        driver: Driver::W2,
    };
    let dts = [0.02, 0.01, 0.005];
    let refine = 16usize;
    let fine_dt = dts[2] / refine as f64;
    let fine_steps = (1.0 / fine_dt).round() as usize;
    let fine_grid = TimeGrid::uniform(1.0, fine_steps).unwrap();
    let n_paths = 200u64;

    let mut errors = vec![0.0f64; dts.len()];
    for idx in 0..n_paths {
        let bp_fine =
            relperf::market::sample_brownian_single(&fine_grid, &corr, RngSeed::new(7001), idx)
                .unwrap();
        let market_fine =
            relperf::market::realize_market(&model, &bp_fine, &fine_grid, &corr).unwrap();
        let alpha_f = realize_strategy(&alpha_spec, &market_fine);
        let beta_f = realize_strategy(&beta_spec, &market_fine);
        let x1 =
            relperf::wealth::evolve_wealth_spec(&market_fine, &alpha_f, 1.0, Manager::One).unwrap();
        let x2 =
            relperf::wealth::evolve_wealth_spec(&market_fine, &beta_f, 1.0, Manager::Two).unwrap();
        let reference: Vec<f64> = x1
            .values
            .iter()
            .zip(&x2.values)
            .map(|(a, b)| a / b.powf(params.theta1))
            .collect();
        for (l, &dt) in dts.iter().enumerate() {
            let f = (dt / fine_dt).round() as usize;
            let grid = fine_grid.coarsen(f).unwrap();
            let bp = bp_fine.coarsen(f);
            let market = relperf::market::realize_market(&model, &bp, &grid, &corr).unwrap();
            let alpha = realize_strategy(&alpha_spec, &market);
            let beta = realize_strategy(&beta_spec, &market);
            let rel =
                evolve_relative_spec(&market, &alpha, &beta, &params, 1.0, Manager::One).unwrap();
            let mut sup = 0.0f64;
            for (k, v) in rel.values.iter().enumerate() {
                let r = reference[k * f];
                sup = sup.max((v - r).abs() / r);
            }
            errors[l] += sup / n_paths as f64;
        }
    }
    let order = relperf::verify::fit_order(&dts, &errors).unwrap();
    assert!(
        (0.4..=0.6).contains(&order),
        "ratio-consistency order {order}, errors {errors:?}"
    );
}

#[test]
fn mirroring_competitor_at_unit_theta_freezes_relative_wealth() {
    // theta = 1 with alpha = beta zeroes the hedged exposure, and the
    // remaining drift collects to theta(1-theta)/2 * C2 = 0: the relative
    // wealth must stay flat up to per-step round-off.
    let model = CoefficientModel::constant([0.07, 0.07], [0.2, 0.2], 0.01);
    let corr = CorrelationSpec::new(0.3).unwrap();
    let grid = TimeGrid::uniform(1.0, 100).unwrap();
    let params = CompetitionParams::new(1.0, 0.5).unwrap();
    let market = market_for_path(&model, &corr, &grid, RngSeed::new(5), 0).unwrap();
    let beta = StrategyPath::constant_pair(market.len(), [0.5, 0.3]);
    let alpha = StrategyPath::constant_pair(market.len(), [0.5, 0.3]);
    let rel = evolve_relative_div(&market, &alpha, &beta, &params, 1.0, Manager::One).unwrap();
    for (k, v) in rel.values.iter().enumerate() {
        assert!((v - 1.0).abs() <= 1e-10, "node {k}: {v}");
    }
}
