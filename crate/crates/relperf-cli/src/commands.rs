//! Thin orchestration over the library: simulate ensembles, emit the
//! best-response and Nash closed forms, run the verification suite, and
//! summarize past runs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};

use relperf::criteria::{
    compute_a_m, compute_b, h_process, Atom, AtomicMeasure, ForwardUtility, HeatFunction,
};
use relperf::market::{realize_market, sample_brownian_single, MarketPath};
use relperf::strategies::{
    best_response_div, best_response_spec, best_response_spec_alt, crra_value_spec, eta_spec,
    log_value_spec, nash_div, nash_spec, EtaForm,
};
use relperf::verify::nash_fixed_point_check;
use relperf::wealth::{
    competition_quadratic, evolve_relative_div, evolve_relative_spec, evolve_wealth_div,
    evolve_wealth_spec, modified_sharpe_div, realize_strategy, StrategyPath,
};
use relperf::{Manager, Setting};

use crate::acceptance;
use crate::config::{PreferenceSpec, RunConfig};
use crate::output::{
    read_manifest, write_manifest, write_series_csv, write_terminal_csv, Manifest, Verdict,
};

/// Everything one simulated path feeds into the CSVs.
struct PathSim {
    alpha: StrategyPath,
    beta: StrategyPath,
    wealth1: Vec<f64>,
    wealth2: Vec<f64>,
    relative1: Vec<f64>,
    value1: Vec<f64>,
}

/// The measure generating manager 1's criterion in the diversification
/// machinery; `Log` is the unit atom.
fn measure_for(prefs: &PreferenceSpec) -> Result<AtomicMeasure> {
    Ok(match prefs {
        PreferenceSpec::Crra { gamma1, .. } => AtomicMeasure::dirac_crra(*gamma1)?,
        PreferenceSpec::Log => AtomicMeasure::new(vec![Atom { y: 1.0, w: 1.0 }])?,
        PreferenceSpec::Measure { atoms, .. } => AtomicMeasure::new(atoms.clone())?,
    })
}

fn simulate_path(cfg: &RunConfig, idx: u64) -> Result<PathSim> {
    let grid = cfg.grid.build()?;
    let corr = cfg.market.correlation()?;
    let model = cfg.market.model();
    let params = cfg.competition.params()?;
    let bp = sample_brownian_single(&grid, &corr, cfg.seed(), idx)?;
    let market = realize_market(&model, &bp, &grid, &corr)?;
    let beta = realize_strategy(&cfg.opponent, &market);
    let theta1 = params.theta1;
    let x1_rel = cfg.x1_rel();

    match cfg.setting {
        Setting::Specialization => {
            let alpha = match (&cfg.own, &cfg.preferences) {
                (Some(own), _) => realize_strategy(own, &market),
                (None, PreferenceSpec::Crra { gamma1, .. }) => {
                    best_response_spec(&market, &beta, theta1, *gamma1, Manager::One)?
                }
                (None, PreferenceSpec::Log) => {
                    best_response_spec(&market, &beta, theta1, 1.0, Manager::One)?
                }
                (None, PreferenceSpec::Measure { .. }) => {
                    bail!("measure preferences need the diversification setting")
                }
            };
            let wealth1 = evolve_wealth_spec(&market, &alpha, cfg.initial.x1, Manager::One)?;
            let wealth2 = evolve_wealth_spec(&market, &beta, cfg.initial.x2, Manager::Two)?;
            let relative1 =
                evolve_relative_spec(&market, &alpha, &beta, &params, x1_rel, Manager::One)?;
            let value1 = match &cfg.preferences {
                PreferenceSpec::Crra { gamma1, .. } => {
                    let eta = eta_spec(
                        &market,
                        &beta,
                        theta1,
                        *gamma1,
                        Manager::One,
                        EtaForm::Direct,
                    )?;
                    crra_value_spec(&relative1.values, &market, &eta, *gamma1)?.values
                }
                PreferenceSpec::Log => {
                    log_value_spec(&relative1.values, &market, &beta, theta1, Manager::One)?
                        .0
                        .values
                }
                PreferenceSpec::Measure { .. } => unreachable!(),
            };
            Ok(PathSim {
                alpha,
                beta,
                wealth1: wealth1.values,
                wealth2: wealth2.values,
                relative1: relative1.values,
                value1,
            })
        }
        Setting::Diversification => {
            let h = HeatFunction::new(measure_for(&cfg.preferences)?);
            let u = ForwardUtility::new(h.clone())?;
            let sharpe = modified_sharpe_div(&market, &beta, theta1, Manager::One)?;
            let (a_path, m_path) = compute_a_m(&sharpe, &market)?;
            let c_path = competition_quadratic(&market.sigma1, &market.sigma2, market.rho, &beta)?;
            let b_path = compute_b(theta1, &c_path, &market.grid)?;
            let alpha = match &cfg.own {
                Some(own) => realize_strategy(own, &market),
                None => {
                    let h_vals = h_process(&h, x1_rel, &a_path, &m_path)?;
                    best_response_div(&market, &beta, theta1, &h_vals, Manager::One)?
                }
            };
            let wealth1 = evolve_wealth_div(&market, &alpha, cfg.initial.x1)?;
            let wealth2 = evolve_wealth_div(&market, &beta, cfg.initial.x2)?;
            let relative1 =
                evolve_relative_div(&market, &alpha, &beta, &params, x1_rel, Manager::One)?;
            let value1 = (0..market.len())
                .map(|k| u.u(relative1.values[k] / b_path.values[k], a_path.values[k]))
                .collect::<relperf::Result<Vec<f64>>>()?;
            Ok(PathSim {
                alpha,
                beta,
                wealth1: wealth1.values,
                wealth2: wealth2.values,
                relative1: relative1.values,
                value1,
            })
        }
    }
}

struct BlockSum {
    wealth1: Vec<f64>,
    wealth2: Vec<f64>,
    relative1: Vec<f64>,
    value1: Vec<f64>,
    terminals: Vec<[f64; 4]>,
}

/// Simulates the configured scenario and writes `series.csv`,
/// `terminal.csv`, `strategies.csv` and the manifest into the output
/// directory. Ensemble reduction is blocked by path index, so the files are
/// byte-identical for any thread count.
pub fn cmd_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let started = Instant::now();
    let grid = cfg.grid.build()?;
    let n_nodes = grid.len();
    let n_paths = cfg.n_paths;

    const BLOCK: usize = 256;
    let n_blocks = n_paths.div_ceil(BLOCK);
    use rayon::prelude::*;
    let blocks: Vec<BlockSum> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * BLOCK;
            let hi = ((b + 1) * BLOCK).min(n_paths);
            let mut sum = BlockSum {
                wealth1: vec![0.0; n_nodes],
                wealth2: vec![0.0; n_nodes],
                relative1: vec![0.0; n_nodes],
                value1: vec![0.0; n_nodes],
                terminals: Vec::with_capacity(hi - lo),
            };
            for idx in lo..hi {
                let sim = simulate_path(cfg, idx as u64)?;
                for k in 0..n_nodes {
                    sum.wealth1[k] += sim.wealth1[k];
                    sum.wealth2[k] += sim.wealth2[k];
                    sum.relative1[k] += sim.relative1[k];
                    sum.value1[k] += sim.value1[k];
                }
                sum.terminals.push([
                    sim.wealth1[n_nodes - 1],
                    sim.wealth2[n_nodes - 1],
                    sim.relative1[n_nodes - 1],
                    sim.value1[n_nodes - 1],
                ]);
            }
            Ok(sum)
        })
        .collect::<Result<Vec<_>>>()?;

    // deterministic cross-block reduction in index order
    let mut mean = BlockSum {
        wealth1: vec![0.0; n_nodes],
        wealth2: vec![0.0; n_nodes],
        relative1: vec![0.0; n_nodes],
        value1: vec![0.0; n_nodes],
        terminals: Vec::with_capacity(n_paths),
    };
    for b in blocks {
        for k in 0..n_nodes {
            mean.wealth1[k] += b.wealth1[k];
            mean.wealth2[k] += b.wealth2[k];
            mean.relative1[k] += b.relative1[k];
            mean.value1[k] += b.value1[k];
        }
        mean.terminals.extend(b.terminals);
    }
    let scale = 1.0 / n_paths as f64;
    for v in [
        &mut mean.wealth1,
        &mut mean.wealth2,
        &mut mean.relative1,
        &mut mean.value1,
    ] {
        for x in v.iter_mut() {
            *x *= scale;
        }
    }

    write_series_csv(
        &out_dir.join("series.csv"),
        grid.times(),
        &[
            ("mean_wealth1", &mean.wealth1),
            ("mean_wealth2", &mean.wealth2),
            ("mean_relative1", &mean.relative1),
            ("mean_value1", &mean.value1),
        ],
    )?;

    let col = |i: usize| -> Vec<f64> { mean.terminals.iter().map(|t| t[i]).collect() };
    let (t0, t1, t2, t3) = (col(0), col(1), col(2), col(3));
    write_terminal_csv(
        &out_dir.join("terminal.csv"),
        &[
            ("wealth1", &t0),
            ("wealth2", &t1),
            ("relative1", &t2),
            ("value1", &t3),
        ],
    )?;

    // representative strategies along path 0
    let path0 = simulate_path(cfg, 0)?;
    let strat_cols = strategy_columns(&path0.alpha, &path0.beta)?;
    let named: Vec<(&str, &[f64])> = strat_cols.iter().map(|(n, v)| (*n, v.as_slice())).collect();
    write_series_csv(&out_dir.join("strategies.csv"), grid.times(), &named)?;

    let manifest = Manifest {
        config: cfg.clone(),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        verdicts: vec![],
    };
    write_manifest(out_dir, &manifest)?;
    Ok(manifest)
}

fn strategy_columns(
    alpha: &StrategyPath,
    beta: &StrategyPath,
) -> Result<Vec<(&'static str, Vec<f64>)>> {
    Ok(match (alpha, beta) {
        (StrategyPath::Scalar(a), StrategyPath::Scalar(b)) => {
            vec![("alpha", a.clone()), ("beta", b.clone())]
        }
        (StrategyPath::Pair(a), StrategyPath::Pair(b)) => vec![
            ("alpha1", a.iter().map(|x| x[0]).collect()),
            ("alpha2", a.iter().map(|x| x[1]).collect()),
            ("beta1", b.iter().map(|x| x[0]).collect()),
            ("beta2", b.iter().map(|x| x[1]).collect()),
        ],
        _ => bail!("strategy shapes disagree"),
    })
}

/// Emits the closed-form best response of manager 1 along path 0, with a
/// form-equivalence verdict where two printed forms exist.
pub fn cmd_best_response(cfg: &RunConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let started = Instant::now();
    let grid = cfg.grid.build()?;
    let corr = cfg.market.correlation()?;
    let model = cfg.market.model();
    let params = cfg.competition.params()?;
    let bp = sample_brownian_single(&grid, &corr, cfg.seed(), 0)?;
    let market: MarketPath = realize_market(&model, &bp, &grid, &corr)?;
    let beta = realize_strategy(&cfg.opponent, &market);
    let theta1 = params.theta1;

    let mut verdicts = Vec::new();
    let (alpha, value) = match (&cfg.setting, &cfg.preferences) {
        (Setting::Specialization, PreferenceSpec::Crra { gamma1, .. }) => {
            let a = best_response_spec(&market, &beta, theta1, *gamma1, Manager::One)?;
            let alt = best_response_spec_alt(&market, &beta, theta1, *gamma1, Manager::One)?;
            let dev = a
                .scalar()?
                .iter()
                .zip(alt.scalar()?)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f64, f64::max);
            verdicts.push(Verdict::new(
                "best_response_forms_agree",
                dev < 1e-12,
                format!("sup deviation {dev:.3e} (tolerance 1e-12)"),
            ));
            let eta = eta_spec(
                &market,
                &beta,
                theta1,
                *gamma1,
                Manager::One,
                EtaForm::Direct,
            )?;
            let x_rel =
                evolve_relative_spec(&market, &a, &beta, &params, cfg.x1_rel(), Manager::One)?;
            let v = crra_value_spec(&x_rel.values, &market, &eta, *gamma1)?.values;
            (a, v)
        }
        (Setting::Specialization, PreferenceSpec::Log) => {
            let a = best_response_spec(&market, &beta, theta1, 1.0, Manager::One)?;
            let x_rel =
                evolve_relative_spec(&market, &a, &beta, &params, cfg.x1_rel(), Manager::One)?;
            let (v, _) = log_value_spec(&x_rel.values, &market, &beta, theta1, Manager::One)?;
            (a, v.values)
        }
        (Setting::Specialization, PreferenceSpec::Measure { .. }) => {
            bail!("measure preferences need the diversification setting")
        }
        (Setting::Diversification, prefs) => {
            let h = HeatFunction::new(measure_for(prefs)?);
            let u = ForwardUtility::new(h.clone())?;
            let sharpe = modified_sharpe_div(&market, &beta, theta1, Manager::One)?;
            let (a_path, m_path) = compute_a_m(&sharpe, &market)?;
            let c_path = competition_quadratic(&market.sigma1, &market.sigma2, market.rho, &beta)?;
            let b_path = compute_b(theta1, &c_path, &market.grid)?;
            let h_vals = h_process(&h, cfg.x1_rel(), &a_path, &m_path)?;
            let a = best_response_div(&market, &beta, theta1, &h_vals, Manager::One)?;
            let alt = relperf::strategies::best_response_div_original(
                &market,
                &beta,
                theta1,
                &h_vals,
                Manager::One,
            )?;
            let dev = a
                .pair()?
                .iter()
                .zip(alt.pair()?)
                .flat_map(|(x, y)| [(x[0] - y[0]).abs(), (x[1] - y[1]).abs()])
                .fold(0.0f64, f64::max);
            verdicts.push(Verdict::new(
                "best_response_forms_agree",
                dev < 1e-12,
                format!("sup deviation {dev:.3e} (tolerance 1e-12)"),
            ));
            let opt = relperf::criteria::optimal_relative_wealth_div(
                &h,
                cfg.x1_rel(),
                &a_path,
                &m_path,
                &b_path,
                Manager::One,
            )?;
            let v = (0..market.len())
                .map(|k| u.u(opt.values[k] / b_path.values[k], a_path.values[k]))
                .collect::<relperf::Result<Vec<f64>>>()?;
            (a, v)
        }
    };

    let mut cols = strategy_columns(&alpha, &beta)?;
    cols.push(("value1", value));
    let named: Vec<(&str, &[f64])> = cols.iter().map(|(n, v)| (*n, v.as_slice())).collect();
    write_series_csv(&out_dir.join("best_response.csv"), grid.times(), &named)?;

    let manifest = Manifest {
        config: cfg.clone(),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        verdicts,
    };
    write_manifest(out_dir, &manifest)?;
    Ok(manifest)
}

/// Solves the forward Nash system for CRRA managers along path 0 and writes
/// the equilibrium strategies and value processes.
pub fn cmd_nash(cfg: &RunConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let started = Instant::now();
    let (gamma1, gamma2) = match &cfg.preferences {
        PreferenceSpec::Crra { gamma1, gamma2 } => (*gamma1, *gamma2),
        _ => bail!("the Nash solver needs CRRA preferences for both managers"),
    };
    let grid = cfg.grid.build()?;
    let corr = cfg.market.correlation()?;
    let model = cfg.market.model();
    let params = cfg.competition.params()?;
    let bp = sample_brownian_single(&grid, &corr, cfg.seed(), 0)?;
    let market = realize_market(&model, &bp, &grid, &corr)?;

    let x2_rel = cfg.initial.x2 / cfg.initial.x1.powf(params.theta2);
    let outcome = match cfg.setting {
        Setting::Specialization => {
            nash_spec(&market, gamma1, gamma2, &params, cfg.x1_rel(), x2_rel)?
        }
        Setting::Diversification => {
            nash_div(&market, gamma1, gamma2, &params, cfg.x1_rel(), x2_rel)?
        }
    };
    let deviation = nash_fixed_point_check(&market, &params, gamma1, gamma2, &outcome)?;

    let mut cols = strategy_columns(&outcome.alpha, &outcome.beta)?;
    cols.push(("value1", outcome.value1.values.clone()));
    cols.push(("value2", outcome.value2.values.clone()));
    let named: Vec<(&str, &[f64])> = cols.iter().map(|(n, v)| (*n, v.as_slice())).collect();
    write_series_csv(&out_dir.join("nash.csv"), grid.times(), &named)?;

    let manifest = Manifest {
        config: cfg.clone(),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        verdicts: vec![Verdict::new(
            "nash_fixed_point",
            deviation < 1e-12,
            format!(
                "determinant {:.6}, best-response deviation {deviation:.3e} (tolerance 1e-12)",
                outcome.determinant
            ),
        )],
    };
    write_manifest(out_dir, &manifest)?;
    Ok(manifest)
}

/// Runs the full verification suite and writes one manifest with a verdict
/// per criterion.
pub fn cmd_verify(cfg: &RunConfig, out_dir: &Path) -> Result<Manifest> {
    let started = Instant::now();
    let verdicts = acceptance::run_all(cfg.seed);
    for v in &verdicts {
        println!(
            "{} {}: {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        );
    }
    let manifest = Manifest {
        config: cfg.clone(),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        verdicts,
    };
    write_manifest(out_dir, &manifest)?;
    Ok(manifest)
}

/// Prints a human-readable summary of a finished run.
pub fn cmd_report(run_dir: &Path) -> Result<Manifest> {
    let manifest = read_manifest(run_dir).context("no manifest found in run directory")?;
    println!(
        "run seed {} | version {} | {:.2}s wall clock",
        manifest.seed, manifest.version, manifest.wall_clock_secs
    );
    println!(
        "setting {:?}, horizon {} at dt {}, {} paths",
        manifest.config.setting,
        manifest.config.grid.horizon,
        manifest.config.grid.dt,
        manifest.config.n_paths
    );
    if manifest.verdicts.is_empty() {
        println!("no verdicts recorded");
    }
    for v in &manifest.verdicts {
        println!(
            "{} {}: {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        );
    }
    Ok(manifest)
}

/// Output directory resolution: flag beats config.
pub fn resolve_out_dir(cfg: &RunConfig, flag: Option<&Path>) -> PathBuf {
    flag.map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from(&cfg.output_dir))
}
