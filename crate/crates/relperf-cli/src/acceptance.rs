//! The verification suite behind `relperf verify`: nine numbered checks
//! covering martingale optimality, supermartingale sub-optimality, PDE
//! residuals, Nash fixed points, the heat-function machinery, strong
//! convergence of the closed form, time-monotonicity, the worthless-market
//! degeneracy, and thread-count determinism. Each check prints one verdict
//! and pins its tolerances in code.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use relperf::criteria::{
    compute_a_m, compute_b, h_process, tilt_measure, Atom, AtomicMeasure, ForwardUtility,
    HeatFunction,
};
use relperf::market::{CoefficientModel, CorrelationSpec, RngSeed, TimeGrid};
use relperf::strategies::{
    best_response_div, best_response_spec, crra_value_spec, eta_spec, nash_div, nash_spec, EtaForm,
};
use relperf::verify::{
    closed_form_vs_sde, eta_positive_root, heat_residual, market_for_path, martingale_test,
    monotonicity_check_div, nash_fixed_point_check, nonmonotonicity_witness_spec,
    paired_suboptimality_test, pde_residual_spec, value_path_stats, PathStats,
};
use relperf::wealth::{
    competition_quadratic, evolve_relative_spec, modified_sharpe_div, realize_strategy,
    StrategyPath, StrategySpec,
};
use relperf::{CompetitionParams, Manager};

use crate::config::{default_config, RunConfig};
use crate::output::Verdict;

/// The pinned scenario: constant lambda = 0.3 on both assets, sigma = 0.2,
/// rho = 0.3, theta1 = 0.5, gamma1 = 2, opponent beta = 0.8, T = 1.
struct Scenario {
    model: CoefficientModel,
    corr: CorrelationSpec,
    params: CompetitionParams,
    gamma1: f64,
    beta: f64,
}

impl Scenario {
    fn pinned() -> Self {
        Scenario {
            model: CoefficientModel::constant([0.07, 0.07], [0.2, 0.2], 0.01),
            corr: CorrelationSpec::new(0.3).unwrap(),
            params: CompetitionParams::new(0.5, 0.5).unwrap(),
            gamma1: 2.0,
            beta: 0.8,
        }
    }

    fn grid(&self, dt: f64) -> TimeGrid {
        TimeGrid::uniform(1.0, (1.0 / dt).round() as usize).unwrap()
    }
}

fn verdict_from(name: &str, result: Result<(bool, String)>) -> Verdict {
    match result {
        Ok((passed, detail)) => Verdict::new(name, passed, detail),
        Err(e) => Verdict::new(name, false, format!("errored: {e:#}")),
    }
}

/// Runs every check in order with the given base seed.
pub fn run_all(seed: u64) -> Vec<Verdict> {
    let (c1, c2) = martingale_pair(seed);
    vec![
        c1,
        c2,
        pde_residual(seed),
        nash_fixed_points(seed),
        machinery_identities(seed),
        convergence(seed),
        monotonicity_dichotomy(seed),
        worthless_market(seed),
        determinism(seed),
    ]
}

pub fn pde_residual(seed: u64) -> Verdict {
    verdict_from("3_pde_residual", criterion_pde(seed))
}

pub fn nash_fixed_points(seed: u64) -> Verdict {
    verdict_from("4_nash_fixed_points", criterion_nash(seed))
}

pub fn machinery_identities(seed: u64) -> Verdict {
    verdict_from("5_machinery_identities", criterion_machinery(seed))
}

pub fn convergence(seed: u64) -> Verdict {
    verdict_from("6_closed_form_vs_sde", criterion_convergence(seed))
}

pub fn monotonicity_dichotomy(seed: u64) -> Verdict {
    verdict_from("7_monotonicity_dichotomy", criterion_monotonicity(seed))
}

pub fn worthless_market(seed: u64) -> Verdict {
    verdict_from("8_worthless_market", criterion_worthless(seed))
}

pub fn determinism(seed: u64) -> Verdict {
    verdict_from("9_determinism", criterion_determinism(seed))
}

/// One specialization path of the pinned scenario: martingale statistics of
/// the optimal value plus the terminal values under the optimal and the
/// +0.2-shifted strategy.
fn martingale_path(
    sc: &Scenario,
    grid: &TimeGrid,
    seed: u64,
    idx: u64,
) -> Result<(PathStats, f64, f64)> {
    let market = market_for_path(&sc.model, &sc.corr, grid, RngSeed::new(seed), idx)?;
    let beta = StrategyPath::constant_scalar(market.len(), sc.beta);
    let theta1 = sc.params.theta1;
    let alpha_star = best_response_spec(&market, &beta, theta1, sc.gamma1, Manager::One)?;
    let eta = eta_spec(
        &market,
        &beta,
        theta1,
        sc.gamma1,
        Manager::One,
        EtaForm::Direct,
    )?;
    let x_star = evolve_relative_spec(&market, &alpha_star, &beta, &sc.params, 1.0, Manager::One)?;
    let v_star = crra_value_spec(&x_star.values, &market, &eta, sc.gamma1)?;
    let stats = value_path_stats(market.grid.times(), &v_star.values);

    let shifted = StrategyPath::Scalar(alpha_star.scalar()?.iter().map(|a| a + 0.2).collect());
    let x_sub = evolve_relative_spec(&market, &shifted, &beta, &sc.params, 1.0, Manager::One)?;
    let v_sub = crra_value_spec(&x_sub.values, &market, &eta, sc.gamma1)?;
    Ok((stats, stats.terminal, *v_sub.values.last().unwrap()))
}

/// Checks 1 and 2 share one 1e5-path ensemble at dt = 1e-3.
pub fn martingale_pair(seed: u64) -> (Verdict, Verdict) {
    let run = || -> Result<(Verdict, Verdict)> {
        let sc = Scenario::pinned();
        let grid = sc.grid(1e-3);
        let n_paths = 100_000usize;
        let started = Instant::now();
        let per_path: Vec<(PathStats, f64, f64)> = {
            use rayon::prelude::*;
            (0..n_paths)
                .into_par_iter()
                .map(|i| martingale_path(&sc, &grid, seed, i as u64))
                .collect::<Result<Vec<_>>>()?
        };
        let elapsed = started.elapsed().as_secs_f64();

        let stats: Vec<PathStats> = per_path.iter().map(|p| p.0).collect();
        let report = martingale_test(&stats, 3.0)?;
        let rel_se = report.terminal_se / report.v0.abs();
        let c1_pass = report.martingale_consistent && rel_se < 0.01 && elapsed < 120.0;
        let c1 = Verdict::new(
            "1_martingale_optimality",
            c1_pass,
            format!(
                "|mean - V0| = {:.3e} vs 3 SE = {:.3e}; SE/|V0| = {:.4}% (< 1%); drift slope {:.3e} (SE {:.3e}); {} paths in {:.1}s (< 120s)",
                (report.terminal_mean - report.v0).abs(),
                3.0 * report.terminal_se,
                100.0 * rel_se,
                report.drift_slope,
                report.drift_slope_se,
                n_paths,
                elapsed
            ),
        );

        let opt: Vec<f64> = per_path.iter().map(|p| p.1).collect();
        let sub: Vec<f64> = per_path.iter().map(|p| p.2).collect();
        let paired = paired_suboptimality_test(&opt, &sub, report.v0, 3.0)?;
        let c2 = Verdict::new(
            "2_supermartingale_suboptimality",
            paired.strictly_below,
            format!(
                "paired mean V_T - V0 = {:.3e} vs -3 SE = {:.3e} (same Brownian paths); raw mean V_T - V0 = {:.3e} (raw SE {:.3e})",
                paired.deficit_mean,
                -3.0 * paired.deficit_se,
                paired.raw_mean - report.v0,
                paired.raw_se
            ),
        );
        Ok((c1, c2))
    };
    match run() {
        Ok(pair) => pair,
        Err(e) => (
            Verdict::new("1_martingale_optimality", false, format!("errored: {e:#}")),
            Verdict::new(
                "2_supermartingale_suboptimality",
                false,
                format!("errored: {e:#}"),
            ),
        ),
    }
}

fn criterion_pde(seed: u64) -> Result<(bool, String)> {
    let sc = Scenario::pinned();
    let grid = sc.grid(1e-3);
    let started = Instant::now();
    let market = market_for_path(&sc.model, &sc.corr, &grid, RngSeed::new(seed), 0)?;
    let beta = StrategyPath::constant_scalar(market.len(), sc.beta);
    let z_grid: Vec<f64> = (1..=50).map(|i| 0.1 * i as f64).collect();
    let ok = pde_residual_spec(&market, &beta, sc.params.theta1, sc.gamma1, &z_grid, None)?;
    let bad = pde_residual_spec(
        &market,
        &beta,
        sc.params.theta1,
        sc.gamma1,
        &z_grid,
        Some(sc.gamma1 * 1.1),
    )?;
    let elapsed = started.elapsed().as_secs_f64();
    let passed = ok.max_normalized < 1e-10 && bad.max_normalized > 1e-3 && elapsed < 10.0;
    Ok((
        passed,
        format!(
            "closed form residual {:.3e} (< 1e-10) on 50x1000 lattice; 10% gamma perturbation residual {:.3e} (> 1e-3); {:.2}s (< 10s)",
            ok.max_normalized, bad.max_normalized, elapsed
        ),
    ))
}

fn criterion_nash(seed: u64) -> Result<(bool, String)> {
    let grid = TimeGrid::uniform(1.0, 50)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x4e61_7368);
    let mut worst: f64 = 0.0;
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
        let det_spec =
            gamma1 * gamma2 - rho * rho * theta1 * theta2 * (1.0 - gamma1) * (1.0 - gamma2);
        let det_div = gamma1 * gamma2 - theta1 * theta2 * (1.0 - gamma1) * (1.0 - gamma2);
        if det_spec.abs() <= 0.1 || det_div.abs() <= 0.1 {
            continue;
        }
        let lambda = [rng.random_range(0.1..0.5), rng.random_range(0.1..0.5)];
        let sigma = [rng.random_range(0.1..0.5), rng.random_range(0.1..0.5)];
        let mu = [lambda[0] * sigma[0] + 0.01, lambda[1] * sigma[1] + 0.01];
        let model = CoefficientModel::constant(mu, sigma, 0.01);
        let corr = CorrelationSpec::new(rho)?;
        let params = CompetitionParams::new(theta1, theta2)?;
        let market = market_for_path(&model, &corr, &grid, RngSeed::new(seed), checked as u64)?;

        let spec = nash_spec(&market, gamma1, gamma2, &params, 1.0, 1.0)?;
        worst = worst.max(nash_fixed_point_check(
            &market, &params, gamma1, gamma2, &spec,
        )?);
        let div = nash_div(&market, gamma1, gamma2, &params, 1.0, 1.0)?;
        worst = worst.max(nash_fixed_point_check(
            &market, &params, gamma1, gamma2, &div,
        )?);
        checked += 1;
    }

    // rho = 0 decoupling must be exact
    let model = CoefficientModel::constant([0.07, 0.06], [0.2, 0.25], 0.01);
    let corr = CorrelationSpec::new(0.0)?;
    let params = CompetitionParams::new(0.7, 0.4)?;
    let market = market_for_path(&model, &corr, &grid, RngSeed::new(seed), 99)?;
    let out = nash_spec(&market, 2.0, 3.0, &params, 1.0, 1.0)?;
    let mut exact = true;
    for k in 0..market.len() {
        exact &= out.alpha.scalar()?[k] == market.lambda1[k] / (2.0 * market.sigma1[k]);
        exact &= out.beta.scalar()?[k] == market.lambda2[k] / (3.0 * market.sigma2[k]);
    }
    let passed = worst < 1e-12 && exact;
    Ok((
        passed,
        format!(
            "20 random draws per setting with |det| > 0.1: worst best-response deviation {worst:.3e} (< 1e-12); rho = 0 equilibrium equals no-competition ratios exactly: {exact}"
        ),
    ))
}

fn criterion_machinery(seed: u64) -> Result<(bool, String)> {
    let mut failures: Vec<String> = Vec::new();
    let h2 = HeatFunction::new(AtomicMeasure::new(vec![
        Atom { y: 0.5, w: 1.0 },
        Atom { y: 2.0, w: 0.4 },
    ])?);

    // heat residual on a lattice
    let samples: Vec<(f64, f64)> = (0..400)
        .map(|i| (-4.0 + 0.025 * i as f64, 0.01 * i as f64))
        .collect();
    let hr = heat_residual(&h2, &samples);
    if hr.max_normalized >= 1e-12 {
        failures.push(format!("heat residual {:.3e}", hr.max_normalized));
    }

    // inverse roundtrip at 100 pseudo-random points
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x6d61_6368);
    let mut worst_rt: f64 = 0.0;
    for _ in 0..100 {
        let x = 10f64.powf(rng.random_range(-3.0..3.0));
        let t: f64 = rng.random_range(0.0..4.0);
        let z = h2.inverse(x, t)?;
        worst_rt = worst_rt.max((h2.eval(z, t) - x).abs() / x);
    }
    if worst_rt >= 1e-10 {
        failures.push(format!("inverse roundtrip {worst_rt:.3e}"));
    }

    // the two representations of the optimal-weight process agree
    let sc = Scenario::pinned();
    let grid = sc.grid(0.01);
    let market = market_for_path(&sc.model, &sc.corr, &grid, RngSeed::new(seed), 1)?;
    let beta = realize_strategy(
        &StrategySpec::TanhPair {
            base: [0.4, 0.2],
            amplitude: [0.3, 0.3],
            scale: 1.0,
        },
        &market,
    );
    let sharpe = modified_sharpe_div(&market, &beta, 0.5, Manager::One)?;
    let (a, m) = compute_a_m(&sharpe, &market)?;
    let z0 = h2.inverse(1.0, 0.0)?;
    let hp = h_process(&h2, 1.0, &a, &m)?;
    let mut worst_h: f64 = 0.0;
    for k in 0..market.len() {
        let tilt = tilt_measure(h2.measure(), a.values[k], m.values[k])?;
        worst_h = worst_h.max((hp[k] - tilt.moment_ratio(z0)).abs() / hp[k]);
    }
    if worst_h >= 1e-10 {
        failures.push(format!("H representations {worst_h:.3e}"));
    }

    // Dirac measure reproduces every homothetic closed form
    let gamma = 2.0;
    let hd = HeatFunction::new(AtomicMeasure::dirac_crra(gamma)?);
    let ud = ForwardUtility::new(hd.clone())?;
    let y = 1.0 / gamma;
    let mut worst_d: f64 = 0.0;
    for (z, t) in [(0.0, 0.0), (1.5, 0.8), (-2.0, 2.0)] {
        let expect = (y * z - 0.5 * y * y * t).exp();
        worst_d = worst_d.max((hd.eval(z, t) - expect).abs() / expect);
    }
    for (x, t) in [(0.5f64, 0.3f64), (1.0, 1.0), (2.5, 0.1)] {
        let r = hd.risk_tolerance(x, t)?;
        worst_d = worst_d.max((r - y).abs() / y);
        let u_expect =
            x.powf(1.0 - gamma) / (1.0 - gamma) * (-(1.0 - gamma) / (2.0 * gamma) * t).exp();
        worst_d = worst_d.max((ud.u(x, t)? - u_expect).abs() / u_expect.abs());
    }
    // optimal wealth and optimal weights in the Dirac case
    let sharped = modified_sharpe_div(&market, &beta, 0.5, Manager::One)?;
    let (ad, md) = compute_a_m(&sharped, &market)?;
    let c = competition_quadratic(&market.sigma1, &market.sigma2, market.rho, &beta)?;
    let bd = compute_b(0.5, &c, &market.grid)?;
    let opt =
        relperf::criteria::optimal_relative_wealth_div(&hd, 1.0, &ad, &md, &bd, Manager::One)?;
    for k in (0..market.len()).step_by(11) {
        let expect = (y * (1.0 - 0.5 * y) * ad.values[k] + y * md.values[k]).exp() * bd.values[k];
        worst_d = worst_d.max((opt.values[k] - expect).abs() / expect);
    }
    let h_const = vec![y; market.len()];
    let alpha = best_response_div(&market, &beta, 0.5, &h_const, Manager::One)?;
    let rho = market.rho;
    for k in (0..market.len()).step_by(17) {
        let m1 =
            (market.lambda1[k] - rho * market.lambda2[k]) / ((1.0 - rho * rho) * market.sigma1[k]);
        let expect = y * m1 + (1.0 - y) * 0.5 * beta.pair()?[k][0];
        worst_d = worst_d.max((alpha.pair()?[k][0] - expect).abs() / (1.0 + expect.abs()));
    }
    if worst_d >= 1e-10 {
        failures.push(format!("Dirac closed forms {worst_d:.3e}"));
    }

    let passed = failures.is_empty();
    Ok((
        passed,
        if passed {
            format!(
                "heat residual {:.3e} (< 1e-12); inverse roundtrip {:.3e} (< 1e-10); H representations {:.3e} (< 1e-10); Dirac closed forms {:.3e} (< 1e-10)",
                hr.max_normalized, worst_rt, worst_h, worst_d
            )
        } else {
            failures.join("; ")
        },
    ))
}

fn criterion_convergence(seed: u64) -> Result<(bool, String)> {
    let sc = Scenario::pinned();
    let h = HeatFunction::new(AtomicMeasure::dirac_crra(2.0)?);
    let beta_spec = StrategySpec::TanhPair {
        base: [0.4, 0.2],
        amplitude: [0.3, 0.3],
        scale: 1.0,
    };
    let report = closed_form_vs_sde(
        &h,
        &sc.model,
        &sc.corr,
        &beta_spec,
        0.5,
        1.0,
        1.0,
        &[4e-3, 2e-3, 1e-3],
        8,
        RngSeed::new(seed ^ 0x636f_6e76),
        256,
    )?;
    let finest = *report.errors.last().unwrap();
    let passed = (0.4..=0.6).contains(&report.order) && finest < 0.01;
    Ok((
        passed,
        format!(
            "fitted strong order {:.3} (in [0.4, 0.6]) over dt = 4e-3/2e-3/1e-3, errors {:?}; relative pathwise error at dt = 1e-3: {:.3e} (< 1e-2)",
            report.order, report.errors, finest
        ),
    ))
}

fn criterion_monotonicity(seed: u64) -> Result<(bool, String)> {
    let sc = Scenario::pinned();
    // 20 x 100 wealth/time lattice
    let grid = sc.grid(0.01);
    let market = market_for_path(&sc.model, &sc.corr, &grid, RngSeed::new(seed), 3)?;
    let h = HeatFunction::new(AtomicMeasure::dirac_crra(2.0)?);
    let u = ForwardUtility::new(h)?;
    let x_grid: Vec<f64> = (1..=20).map(|i| 0.25 * i as f64).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x6d6f_6e6f);
    let mut all_decreasing = true;
    let mut worst_step = f64::NEG_INFINITY;
    for _ in 0..5 {
        let beta = StrategyPath::constant_pair(
            market.len(),
            [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        );
        let report = monotonicity_check_div(&u, &market, &beta, 0.5, &x_grid)?;
        all_decreasing &= report.strictly_decreasing;
        worst_step = worst_step.max(report.worst_step);
    }

    // specialization witness: a ramp through the positive eta root flips
    // the sign; the idle opponent never does
    let (gamma, theta) = (3.0, 1.0);
    let root = eta_positive_root(0.3, 0.3, 0.2, 0.3, theta, gamma)
        .ok_or_else(|| anyhow!("no positive root for the witness schedule"))?;
    let ramp = realize_strategy(
        &StrategySpec::TimeAffineScalar {
            base: 0.0,
            slope: 2.0 * root,
        },
        &market,
    );
    let witness = nonmonotonicity_witness_spec(&market, &ramp, theta, gamma)?;
    let zero = StrategyPath::constant_scalar(market.len(), 0.0);
    let no_witness = nonmonotonicity_witness_spec(&market, &zero, theta, gamma)?;

    let passed = all_decreasing && witness.is_some() && no_witness.is_none();
    Ok((
        passed,
        format!(
            "diversification value strictly decreasing on 20x100 lattice for 5 random strategies (worst forward step {worst_step:.3e}); specialization witness at node {witness:?} for the root-crossing schedule; none for beta = 0: {}",
            no_witness.is_none()
        ),
    ))
}

fn criterion_worthless(seed: u64) -> Result<(bool, String)> {
    let sc = Scenario::pinned();
    let grid = sc.grid(1e-3);
    let market = market_for_path(&sc.model, &sc.corr, &grid, RngSeed::new(seed), 5)?;
    let theta = 0.5;
    let beta0 = relperf::strategies::worthless_competitor(&market, theta)?;
    let sharpe = modified_sharpe_div(&market, &beta0, theta, Manager::One)?;
    let (a, m) = compute_a_m(&sharpe, &market)?;
    let worst_am = a
        .values
        .iter()
        .chain(&m.values)
        .fold(0.0f64, |acc, v| acc.max(v.abs()));

    let h_path = vec![0.5; market.len()];
    let alpha = best_response_div(&market, &beta0, theta, &h_path, Manager::One)?;
    let mut exact = true;
    for k in 0..market.len() {
        for i in 0..2 {
            exact &= alpha.pair()?[k][i] == theta * beta0.pair()?[k][i];
        }
    }

    let hd = HeatFunction::new(AtomicMeasure::dirac_crra(2.0)?);
    let ud = ForwardUtility::new(hd.clone())?;
    let c = competition_quadratic(&market.sigma1, &market.sigma2, market.rho, &beta0)?;
    let b = compute_b(theta, &c, &market.grid)?;
    let opt = relperf::criteria::optimal_relative_wealth_div(&hd, 1.0, &a, &m, &b, Manager::One)?;
    let v0 = ud.u(1.0, 0.0)?;
    let mut worst_v: f64 = 0.0;
    for k in 0..market.len() {
        let v = relperf::criteria::forward_value_div(&ud, opt.values[k], a.values[k], b.values[k])?;
        worst_v = worst_v.max((v - v0).abs() / v0.abs());
    }

    let passed = worst_am <= 1e-12 && exact && worst_v <= 1e-10;
    Ok((
        passed,
        format!(
            "max |A|, |M| = {worst_am:.3e} (<= 1e-12); alpha* == theta beta0 bitwise: {exact}; value drift along the optimal wealth {worst_v:.3e} (<= 1e-10)"
        ),
    ))
}

fn criterion_determinism(seed: u64) -> Result<(bool, String)> {
    let mut cfg: RunConfig = default_config();
    cfg.seed = seed;
    cfg.n_paths = 512;
    cfg.grid.dt = 0.01;

    let base =
        std::env::temp_dir().join(format!("relperf-determinism-{}-{seed}", std::process::id()));
    let files = ["series.csv", "terminal.csv", "strategies.csv"];
    let mut contents: Vec<Vec<Vec<u8>>> = Vec::new();
    for threads in [1usize, 4] {
        let dir = base.join(format!("threads{threads}"));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()?;
        pool.install(|| crate::commands::cmd_simulate(&cfg, &dir))?;
        contents.push(
            files
                .iter()
                .map(|f| fs::read(dir.join(f)))
                .collect::<std::io::Result<Vec<_>>>()?,
        );
    }
    let identical = contents[0] == contents[1];
    let _ = fs::remove_dir_all(&base);
    Ok((
        identical,
        format!(
            "simulate with --threads 1 vs --threads 4 at equal seed: {} byte-identical",
            if identical { "CSVs" } else { "CSVs NOT" }
        ),
    ))
}

/// Temp-dir helper for tests.
pub fn scratch_dir(tag: &str) -> PathBuf {
    std::env::temp_dir().join(format!("relperf-{tag}-{}", std::process::id()))
}
