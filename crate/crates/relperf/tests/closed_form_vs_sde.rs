//! Strong-convergence study: the feedback-policy Euler evolution of the
//! optimal relative wealth against the closed form on a refined grid.

use relperf::criteria::{Atom, AtomicMeasure, HeatFunction};
use relperf::market::{CoefficientModel, CorrelationSpec, RngSeed, TimeGrid};
use relperf::strategies::worthless_competitor;
use relperf::verify::{closed_form_vs_sde, evolve_relative_div_feedback, market_for_path};
use relperf::wealth::StrategySpec;

fn model() -> CoefficientModel {
    CoefficientModel::constant([0.07, 0.07], [0.2, 0.2], 0.01)
}

#[test]
fn feedback_euler_converges_to_closed_form_at_order_half() {
    let corr = CorrelationSpec::new(0.3).unwrap();
    let h = HeatFunction::new(AtomicMeasure::dirac_crra(2.0).unwrap());
    let beta_spec = StrategySpec::TanhPair {
        base: [0.4, 0.2],
        amplitude: [0.3, 0.3],
        scale: 1.0,
    };
    let report = closed_form_vs_sde(
        &h,
        &model(),
        &corr,
        &beta_spec,
        0.5,
        1.0,
        1.0,
        &[4e-3, 2e-3, 1e-3],
        8,
        RngSeed::new(99),
        128,
    )
    .unwrap();
    assert!(
        (0.4..=0.6).contains(&report.order),
        "order {} errors {:?}",
        report.order,
        report.errors
    );
    assert!(
        report.errors.last().unwrap() < &0.01,
        "error at finest step {:?}",
        report.errors
    );
}

#[test]
fn mixture_measure_feedback_also_converges() {
    // Non-constant risk tolerance: the feedback weight genuinely depends on
    // the evolving state through h^{-1}.
    let corr = CorrelationSpec::new(0.2).unwrap();
    let h = HeatFunction::new(
        AtomicMeasure::new(vec![Atom { y: 0.5, w: 1.0 }, Atom { y: 2.0, w: 0.4 }]).unwrap(),
    );
    let beta_spec = StrategySpec::TanhPair {
        base: [0.3, 0.1],
        amplitude: [0.25, 0.25],
        scale: 1.0,
    };
    let report = closed_form_vs_sde(
        &h,
        &model(),
        &corr,
        &beta_spec,
        0.6,
        1.2,
        1.0,
        &[8e-3, 4e-3, 2e-3],
        8,
        RngSeed::new(7),
        64,
    )
    .unwrap();
    assert!(
        (0.35..=0.65).contains(&report.order),
        "order {} errors {:?}",
        report.order,
        report.errors
    );
}

#[test]
fn worthless_market_leaves_only_the_discount() {
    // With vanishing premia both the Euler evolution and the closed form
    // collapse to x0 * B, agreeing up to quadrature round-off.
    let corr = CorrelationSpec::new(0.3).unwrap();
    let grid = TimeGrid::uniform(1.0, 250).unwrap();
    let market = market_for_path(&model(), &corr, &grid, RngSeed::new(55), 0).unwrap();
    let theta = 0.5;
    let beta0 = worthless_competitor(&market, theta).unwrap();
    let h = HeatFunction::new(AtomicMeasure::dirac_crra(2.0).unwrap());
    let euler = evolve_relative_div_feedback(&market, &beta0, theta, &h, 1.0).unwrap();
    let c =
        relperf::wealth::competition_quadratic(&market.sigma1, &market.sigma2, market.rho, &beta0)
            .unwrap();
    let b = relperf::criteria::compute_b(theta, &c, &grid).unwrap();
    for k in 0..market.len() {
        assert!(
            (euler.values[k] - b.values[k]).abs() <= 1e-10 * b.values[k],
            "node {k}: {} vs {}",
            euler.values[k],
            b.values[k]
        );
    }
}
