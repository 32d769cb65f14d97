//! Numerical certification harness: Monte Carlo (super)martingale tests,
//! PDE and flow-equation residual checks, Nash fixed-point checks,
//! monotonicity scans and strong-convergence studies.
//!
//! Everything here reports scale-free statistics and is reproducible
//! bit-for-bit under a fixed seed: ensembles are reduced in path-index order
//! regardless of the parallelism degree.

use rayon::prelude::*;

use crate::criteria::{compute_a_m, compute_b, ForwardUtility, HeatFunction};
use crate::market::{
    realize_market, sample_brownian_single, BrownianPair, CoefficientModel, CorrelationSpec,
    MarketPath, RngSeed, TimeGrid,
};
use crate::strategies::{best_response_div, best_response_spec, EtaForm, NashOutcome};
use crate::wealth::{
    competition_quadratic, modified_sharpe_div, modified_sharpe_spec, realize_strategy,
    StrategyPath, StrategySpec,
};
use crate::{CompetitionParams, Error, Manager, Result, Setting};

/// Minimum ensemble size for martingale statistics.
pub const MIN_ENSEMBLE: usize = 1000;

/// Per-path reduction of one value path: initial and terminal value plus the
/// per-path contribution to the drift-regression slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStats {
    pub v0: f64,
    pub terminal: f64,
    pub slope_stat: f64,
}

/// Reduces a value path to its martingale statistics. The slope statistic is
/// the OLS slope of the path against time; averaging it over paths gives the
/// slope of the ensemble-mean path.
pub fn value_path_stats(times: &[f64], values: &[f64]) -> PathStats {
    let n = times.len() as f64;
    let t_bar = times.iter().sum::<f64>() / n;
    let denom: f64 = times.iter().map(|t| (t - t_bar) * (t - t_bar)).sum();
    let slope_stat = times
        .iter()
        .zip(values)
        .map(|(t, v)| (t - t_bar) * v)
        .sum::<f64>()
        / denom;
    PathStats {
        v0: values[0],
        terminal: *values.last().unwrap(),
        slope_stat,
    }
}

/// Builds per-path statistics for an ensemble, parallel across path indices
/// but collected in index order.
pub fn collect_path_stats<F>(n_paths: usize, per_path: F) -> Result<Vec<PathStats>>
where
    F: Fn(u64) -> Result<PathStats> + Sync,
{
    (0..n_paths)
        .into_par_iter()
        .map(|i| per_path(i as u64))
        .collect()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Outcome of a Monte Carlo martingale test.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    pub n_paths: usize,
    pub v0: f64,
    pub terminal_mean: f64,
    pub terminal_se: f64,
    pub drift_slope: f64,
    pub drift_slope_se: f64,
    pub k: f64,
    /// `|mean(V_T) - V_0| <= k SE`.
    pub martingale_consistent: bool,
    /// `mean(V_T) <= V_0 + k SE`.
    pub supermartingale_consistent: bool,
}

/// Terminal-mean comparison plus per-step drift regression at the `k`-sigma
/// rule.
pub fn martingale_test(stats: &[PathStats], k: f64) -> Result<MartingaleReport> {
    if stats.len() < MIN_ENSEMBLE {
        return Err(Error::DegenerateEnsemble(stats.len()));
    }
    let v0 = stats[0].v0;
    let terminals: Vec<f64> = stats.iter().map(|s| s.terminal).collect();
    let slopes: Vec<f64> = stats.iter().map(|s| s.slope_stat).collect();
    let (terminal_mean, terminal_se) = mean_se(&terminals);
    let (drift_slope, drift_slope_se) = mean_se(&slopes);
    Ok(MartingaleReport {
        n_paths: stats.len(),
        v0,
        terminal_mean,
        terminal_se,
        drift_slope,
        drift_slope_se,
        k,
        martingale_consistent: (terminal_mean - v0).abs() <= k * terminal_se,
        supermartingale_consistent: terminal_mean - v0 <= k * terminal_se,
    })
}

/// Paired comparison of a candidate strategy against the optimal one on the
/// same Brownian paths.
///
/// Since the optimal terminal values have mean exactly `V_0`, the paired
/// differences `V_T(candidate) - V_T(optimal)` estimate
/// `mean V_T(candidate) - V_0` with far smaller variance than the raw
/// terminal mean; both views are reported.
#[derive(Debug, Clone, PartialEq)]
pub struct SuboptimalityReport {
    pub n_paths: usize,
    pub v0: f64,
    pub raw_mean: f64,
    pub raw_se: f64,
    pub deficit_mean: f64,
    pub deficit_se: f64,
    pub k: f64,
    /// Paired estimate of `mean V_T - V_0` sits below `-k SE`.
    pub strictly_below: bool,
}

pub fn paired_suboptimality_test(
    optimal_terminals: &[f64],
    candidate_terminals: &[f64],
    v0: f64,
    k: f64,
) -> Result<SuboptimalityReport> {
    if optimal_terminals.len() != candidate_terminals.len() {
        return Err(Error::LengthMismatch {
            expected: optimal_terminals.len(),
            got: candidate_terminals.len(),
        });
    }
    if optimal_terminals.len() < MIN_ENSEMBLE {
        return Err(Error::DegenerateEnsemble(optimal_terminals.len()));
    }
    let (raw_mean, raw_se) = mean_se(candidate_terminals);
    let diffs: Vec<f64> = candidate_terminals
        .iter()
        .zip(optimal_terminals)
        .map(|(c, o)| c - o)
        .collect();
    let (deficit_mean, deficit_se) = mean_se(&diffs);
    Ok(SuboptimalityReport {
        n_paths: optimal_terminals.len(),
        v0,
        raw_mean,
        raw_se,
        deficit_mean,
        deficit_se,
        k,
        strictly_below: deficit_mean < -k * deficit_se,
    })
}

/// Scale-free residual summary over a set of evaluation points.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub max_normalized: f64,
    pub mean_normalized: f64,
    /// What the residual was divided by.
    pub normalization: &'static str,
    pub points: usize,
}

impl ResidualReport {
    fn from_normalized(values: impl Iterator<Item = f64>, normalization: &'static str) -> Self {
        let mut max = 0.0f64;
        let mut sum = 0.0;
        let mut n = 0usize;
        for v in values {
            max = max.max(v);
            sum += v;
            n += 1;
        }
        ResidualReport {
            max_normalized: max,
            mean_normalized: if n > 0 { sum / n as f64 } else { 0.0 },
            normalization,
            points: n,
        }
    }
}

/// Substitutes the homothetic closed form into the specialization random
/// PDE on a `(z, t)` lattice and reports the normalized residual.
///
/// The time derivative is the discrete derivative of the exponent (exactly
/// the left-endpoint slope `-(1-gamma)/(2 gamma) eta_k`), so quadrature of
/// the exponent does not pollute the residual. `gamma_power`, when set,
/// perturbs the power shape while the exponent keeps `gamma` -- the
/// negative control that must push the residual away from zero.
pub fn pde_residual_spec(
    market: &MarketPath,
    beta: &StrategyPath,
    theta: f64,
    gamma: f64,
    z_grid: &[f64],
    gamma_power: Option<f64>,
) -> Result<ResidualReport> {
    if !(theta >= 0.0 && theta <= 1.0) {
        return Err(Error::InvalidTheta(theta));
    }
    if !(gamma > 0.0 && gamma != 1.0) {
        return Err(Error::InvalidGamma(gamma));
    }
    let gp = gamma_power.unwrap_or(gamma);
    if !(gp > 0.0 && gp != 1.0) {
        return Err(Error::InvalidGamma(gp));
    }
    let b = beta.scalar()?;
    beta.validate_finite()?;
    let rho = market.rho;
    let n = market.len();
    let sharpe = modified_sharpe_spec(market, beta, theta, Manager::One)?;
    let c_exp = (1.0 - gamma) / (2.0 * gamma);

    // eta with the unperturbed gamma drives the exponent
    let eta: Vec<f64> = (0..n)
        .map(|k| {
            let (l1, l2) = (sharpe.l1[k], sharpe.l2[k]);
            let bb = theta * market.sigma2[k] * b[k];
            l1 * l1 + 2.0 * (rho * l1 - l2) * bb * gamma
                - (1.0 - rho * rho) * bb * bb * gamma * gamma
        })
        .collect();

    let mut k_factor = 1.0f64; // exp(-c_exp * int eta)
    let mut normalized = Vec::with_capacity(z_grid.len() * (n - 1));
    for k in 0..n - 1 {
        let (l1, l2) = (sharpe.l1[k], sharpe.l2[k]);
        let bb = theta * market.sigma2[k] * b[k];
        let exponent_slope = -c_exp * eta[k];
        for &z in z_grid {
            let v = z.powf(1.0 - gp) / (1.0 - gp) * k_factor;
            let v_z = z.powf(-gp) * k_factor;
            let v_zz = -gp * z.powf(-gp - 1.0) * k_factor;
            let t1 = exponent_slope * v;
            let t2 = -0.5 * l1 * l1 * v_z * v_z / v_zz;
            let t3 = 0.5 * (1.0 - rho * rho) * bb * bb * z * z * v_zz;
            let t4 = (rho * l1 - l2) * bb * z * v_z;
            let scale = t1.abs() + t2.abs() + t3.abs() + t4.abs();
            let resid = (t1 + t2 + t3 + t4).abs();
            normalized.push(if scale > 0.0 { resid / scale } else { resid });
        }
        k_factor *= (exponent_slope * market.grid.dt(k)).exp();
    }
    Ok(ResidualReport::from_normalized(
        normalized.into_iter(),
        "sum of absolute PDE terms",
    ))
}

/// Residual of the heat identity `h_t + h_zz / 2 = 0`, normalized by `|h|`.
pub fn heat_residual(h: &HeatFunction, samples: &[(f64, f64)]) -> ResidualReport {
    ResidualReport::from_normalized(
        samples.iter().map(|&(z, t)| {
            let d = h.eval_all(z, t);
            (d.h_t + 0.5 * d.h_zz).abs() / d.h.abs()
        }),
        "|h|",
    )
}

/// Residual of the utility flow equation `u_t u_zz - u_z^2 / 2 = 0` via
/// analytic derivatives, normalized by `u_z^2 / 2`.
pub fn u_flow_residual(u: &ForwardUtility, samples: &[(f64, f64)]) -> Result<ResidualReport> {
    let mut vals = Vec::with_capacity(samples.len());
    for &(x, t) in samples {
        let u_z = u.u_z(x, t)?;
        let u_zz = u.u_zz(x, t)?;
        let u_t = u.u_t(x, t)?;
        vals.push((u_t * u_zz - 0.5 * u_z * u_z).abs() / (0.5 * u_z * u_z));
    }
    Ok(ResidualReport::from_normalized(
        vals.into_iter(),
        "u_z^2 / 2",
    ))
}

/// Grid levels, errors and the fitted order `error ~ C dt^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub dts: Vec<f64>,
    pub errors: Vec<f64>,
    pub order: f64,
}

/// Least-squares exponent of `error ~ C h^p`; needs at least 3 levels.
pub fn fit_order(dts: &[f64], errors: &[f64]) -> Result<f64> {
    if dts.len() != errors.len() || dts.len() < 3 {
        return Err(Error::LengthMismatch {
            expected: 3,
            got: dts.len().min(errors.len()),
        });
    }
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let den: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    Ok(num / den)
}

/// Central-difference residual of the utility flow equation at shrinking
/// spacings. The analytic construction satisfies the equation, so the
/// finite-difference residual must vanish at second order in the spacing.
pub fn u_flow_residual_fd(
    u: &ForwardUtility,
    points: &[(f64, f64)],
    spacings: &[f64],
) -> Result<ConvergenceReport> {
    let mut errors = Vec::with_capacity(spacings.len());
    for &h in spacings {
        let mut worst = 0.0f64;
        for &(x, t) in points {
            debug_assert!(t >= h && x > h);
            let u_t = (u.u(x, t + h)? - u.u(x, t - h)?) / (2.0 * h);
            let u_z = (u.u(x + h, t)? - u.u(x - h, t)?) / (2.0 * h);
            let u_zz = (u.u(x + h, t)? - 2.0 * u.u(x, t)? + u.u(x - h, t)?) / (h * h);
            let resid = (u_t - 0.5 * u_z * u_z / u_zz).abs();
            let scale = u_t.abs().max(1e-300);
            worst = worst.max(resid / scale);
        }
        errors.push(worst);
    }
    let order = fit_order(spacings, &errors)?;
    Ok(ConvergenceReport {
        dts: spacings.to_vec(),
        errors,
        order,
    })
}

/// Recomputes each best response against the opponent's equilibrium strategy
/// and reports the sup-norm deviation from the equilibrium.
pub fn nash_fixed_point_check(
    market: &MarketPath,
    params: &CompetitionParams,
    gamma1: f64,
    gamma2: f64,
    outcome: &NashOutcome,
) -> Result<f64> {
    let mut worst = 0.0f64;
    match outcome.setting {
        Setting::Specialization => {
            let br1 =
                best_response_spec(market, &outcome.beta, params.theta1, gamma1, Manager::One)?;
            let br2 =
                best_response_spec(market, &outcome.alpha, params.theta2, gamma2, Manager::Two)?;
            for k in 0..market.len() {
                worst = worst
                    .max((br1.scalar()?[k] - outcome.alpha.scalar()?[k]).abs())
                    .max((br2.scalar()?[k] - outcome.beta.scalar()?[k]).abs());
            }
        }
        Setting::Diversification => {
            let h1 = vec![1.0 / gamma1; market.len()];
            let h2 = vec![1.0 / gamma2; market.len()];
            let br1 = best_response_div(market, &outcome.beta, params.theta1, &h1, Manager::One)?;
            let br2 = best_response_div(market, &outcome.alpha, params.theta2, &h2, Manager::Two)?;
            for k in 0..market.len() {
                for i in 0..2 {
                    worst = worst
                        .max((br1.pair()?[k][i] - outcome.alpha.pair()?[k][i]).abs())
                        .max((br2.pair()?[k][i] - outcome.beta.pair()?[k][i]).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Time-monotonicity scan of the diversification value on a wealth/time
/// lattice along one realized coefficient path.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub strictly_decreasing: bool,
    /// Largest observed forward step `V(x, t_{k+1}) - V(x, t_k)`.
    pub worst_step: f64,
    pub lattice_points: usize,
}

pub fn monotonicity_check_div(
    u: &ForwardUtility,
    market: &MarketPath,
    beta: &StrategyPath,
    theta: f64,
    x_grid: &[f64],
) -> Result<MonotonicityReport> {
    let sharpe = modified_sharpe_div(market, beta, theta, Manager::One)?;
    let (a_path, _) = compute_a_m(&sharpe, market)?;
    let c_path = competition_quadratic(&market.sigma1, &market.sigma2, market.rho, beta)?;
    let b_path = compute_b(theta, &c_path, &market.grid)?;
    let mut worst = f64::NEG_INFINITY;
    let mut ok = true;
    for &x in x_grid {
        let mut prev = u.u(x / b_path.values[0], a_path.values[0])?;
        for k in 1..market.len() {
            let v = u.u(x / b_path.values[k], a_path.values[k])?;
            let step = v - prev;
            worst = worst.max(step);
            if !(v < prev) {
                ok = false;
            }
            prev = v;
        }
    }
    Ok(MonotonicityReport {
        strictly_decreasing: ok,
        worst_step: worst,
        lattice_points: x_grid.len() * market.len(),
    })
}

/// Expanded coefficients `(c0, c1, c2)` of the specialization exponent as a
/// polynomial in the competitor's position `beta`:
/// `eta(beta) = c0 + c1 beta + c2 beta^2`. An independent route to eta used
/// for root construction and cross-checks.
pub fn eta_beta_polynomial(
    lambda1: f64,
    lambda2: f64,
    sigma2: f64,
    rho: f64,
    theta: f64,
    gamma: f64,
) -> [f64; 3] {
    let c0 = lambda1 * lambda1;
    let c1 = -2.0 * theta * sigma2 * (gamma * lambda2 + rho * (1.0 - gamma) * lambda1);
    let c2 = sigma2
        * sigma2
        * (rho * rho * theta * theta * (1.0 - gamma) * (1.0 - gamma)
            + theta * theta * gamma * (1.0 - gamma)
            + theta * gamma);
    [c0, c1, c2]
}

/// The positive root of `eta(beta) = 0` when the parabola opens downward;
/// beyond it the specialization criterion turns time-increasing.
pub fn eta_positive_root(
    lambda1: f64,
    lambda2: f64,
    sigma2: f64,
    rho: f64,
    theta: f64,
    gamma: f64,
) -> Option<f64> {
    let [c0, c1, c2] = eta_beta_polynomial(lambda1, lambda2, sigma2, rho, theta, gamma);
    if c2 >= 0.0 {
        return None;
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let r1 = (-c1 + sq) / (2.0 * c2);
    let r2 = (-c1 - sq) / (2.0 * c2);
    [r1, r2].into_iter().find(|r| *r > 0.0)
}

/// Searches the specialization exponent path for a sign change: the node at
/// which `dV/dt` flips sign, if any. `eta > 0` means time-decreasing value.
pub fn nonmonotonicity_witness_spec(
    market: &MarketPath,
    beta: &StrategyPath,
    theta: f64,
    gamma: f64,
) -> Result<Option<usize>> {
    let eta =
        crate::strategies::eta_spec(market, beta, theta, gamma, Manager::One, EtaForm::Direct)?;
    let first = eta.values[0];
    for (k, &v) in eta.values.iter().enumerate().skip(1) {
        if v == 0.0 || (v > 0.0) != (first > 0.0) {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// Scans the diversification value at a probe wealth for any time increase;
/// returns the offending node. Expected to find none for admissible
/// strategies.
pub fn nonmonotonicity_witness_div(
    u: &ForwardUtility,
    market: &MarketPath,
    beta: &StrategyPath,
    theta: f64,
    x_probe: f64,
) -> Result<Option<usize>> {
    let report = monotonicity_check_div(u, market, beta, theta, &[x_probe])?;
    if report.strictly_decreasing {
        return Ok(None);
    }
    // locate the first increase
    let sharpe = modified_sharpe_div(market, beta, theta, Manager::One)?;
    let (a_path, _) = compute_a_m(&sharpe, market)?;
    let c_path = competition_quadratic(&market.sigma1, &market.sigma2, market.rho, beta)?;
    let b_path = compute_b(theta, &c_path, &market.grid)?;
    let mut prev = u.u(x_probe / b_path.values[0], a_path.values[0])?;
    for k in 1..market.len() {
        let v = u.u(x_probe / b_path.values[k], a_path.values[k])?;
        if v >= prev {
            return Ok(Some(k));
        }
        prev = v;
    }
    Ok(None)
}

/// Evolves the diversification relative wealth under the feedback form of
/// the optimal policy: at each step the weight is the risk tolerance of the
/// criterion evaluated at the current (discounted) state and clock.
pub fn evolve_relative_div_feedback(
    market: &MarketPath,
    beta: &StrategyPath,
    theta: f64,
    h: &HeatFunction,
    x0: f64,
) -> Result<crate::wealth::RelativeWealthPath> {
    if !(x0 > 0.0) {
        return Err(Error::NonPositiveWealth(x0));
    }
    let psi = beta.pair()?;
    beta.validate_finite()?;
    let sharpe = modified_sharpe_div(market, beta, theta, Manager::One)?;
    let c_path = competition_quadratic(&market.sigma1, &market.sigma2, market.rho, beta)?;
    let rho = market.rho;
    let omr = 1.0 - rho * rho;
    let half_tt = 0.5 * theta * (1.0 - theta);
    let n = market.len();
    let mut values = Vec::with_capacity(n);
    values.push(x0);
    let mut a_run = 0.0f64;
    let mut c_int = 0.0f64;
    let mut z_warm = 0.0f64;
    for k in 0..n - 1 {
        let (l1, l2) = (sharpe.l1[k], sharpe.l2[k]);
        let b_disc = (half_tt * c_int).exp();
        let x_hat = values[k] / b_disc;
        let z = h.inverse_from(x_hat, a_run, z_warm)?;
        z_warm = z;
        let r = h.ratio_zh(z, a_run);
        let hat1 = (l1 - rho * l2) / (omr * market.sigma1[k]) * r;
        let hat2 = (l2 - rho * l1) / (omr * market.sigma2[k]) * r;
        let own = [hat1 + theta * psi[k][0], hat2 + theta * psi[k][1]];

        let dt = market.grid.dt(k);
        let (dw1, dw2) = market.dw(k);
        let (s1, s2) = (market.sigma1[k], market.sigma2[k]);
        let e1 = s1 * (own[0] - theta * psi[k][0]);
        let e2 = s2 * (own[1] - theta * psi[k][1]);
        let qv = e1 * e1 + 2.0 * rho * e1 * e2 + e2 * e2;
        let drift = s1 * own[0] * l1 + s2 * own[1] * l2
            - theta * (s1 * psi[k][0] * market.lambda1[k] + s2 * psi[k][1] * market.lambda2[k])
            + 0.5 * theta * (1.0 + theta) * c_path[k]
            - 0.5 * qv;
        values.push(values[k] * (drift * dt + e1 * dw1 + e2 * dw2).exp());

        let delta = (l1 * l1 - 2.0 * rho * l1 * l2 + l2 * l2) / omr;
        a_run += delta * dt;
        c_int += c_path[k] * dt;
    }
    Ok(crate::wealth::RelativeWealthPath {
        values,
        manager: Manager::One,
        theta,
    })
}

/// Closed-form optimal wealth on a grid, from precomputed market data.
fn closed_form_path(
    h: &HeatFunction,
    market: &MarketPath,
    beta: &StrategyPath,
    theta: f64,
    x0: f64,
) -> Result<Vec<f64>> {
    let sharpe = modified_sharpe_div(market, beta, theta, Manager::One)?;
    let (a_path, m_path) = compute_a_m(&sharpe, market)?;
    let c_path = competition_quadratic(&market.sigma1, &market.sigma2, market.rho, beta)?;
    let b_path = compute_b(theta, &c_path, &market.grid)?;
    let opt = crate::criteria::optimal_relative_wealth_div(
        h,
        x0,
        &a_path,
        &m_path,
        &b_path,
        Manager::One,
    )?;
    Ok(opt.values)
}

/// Strong-convergence study: the feedback-policy Euler evolution against the
/// closed-form optimal wealth evaluated on a much finer grid over the same
/// Brownian paths.
///
/// For each coarse step `dt` the error is the relative sup-norm deviation at
/// the shared nodes, averaged over the ensemble; the fitted order for an
/// Euler scheme sits near 1/2 once the opponent's policy carries genuine
/// Brownian state-dependence.
#[allow(clippy::too_many_arguments)]
pub fn closed_form_vs_sde(
    h: &HeatFunction,
    model: &CoefficientModel,
    corr: &CorrelationSpec,
    beta_spec: &StrategySpec,
    theta: f64,
    x0: f64,
    horizon: f64,
    dts: &[f64],
    refine: usize,
    seed: RngSeed,
    n_paths: usize,
) -> Result<ConvergenceReport> {
    if dts.len() < 3 {
        return Err(Error::InvalidGrid(format!(
            "need at least 3 step sizes, got {}",
            dts.len()
        )));
    }
    if n_paths == 0 {
        return Err(Error::DegenerateEnsemble(0));
    }
    let dt_min = dts.iter().copied().fold(f64::INFINITY, f64::min);
    let fine_steps_per_min = refine.max(1);
    let fine_dt = dt_min / fine_steps_per_min as f64;
    let fine_steps = (horizon / fine_dt).round() as usize;
    let fine_grid = TimeGrid::uniform(horizon, fine_steps)?;
    let factors: Vec<usize> = dts
        .iter()
        .map(|&dt| {
            let f = (dt / fine_dt).round() as usize;
            if f == 0 || fine_steps % f != 0 {
                return Err(Error::InvalidGrid(format!(
                    "step {dt} is not a multiple of the reference step {fine_dt}"
                )));
            }
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;

    let per_path = |idx: u64| -> Result<Vec<f64>> {
        let bp_fine = sample_brownian_single(&fine_grid, corr, seed, idx)?;
        let market_fine = realize_market(model, &bp_fine, &fine_grid, corr)?;
        let beta_fine = realize_strategy(beta_spec, &market_fine);
        let reference = closed_form_path(h, &market_fine, &beta_fine, theta, x0)?;

        let mut errs = Vec::with_capacity(factors.len());
        for &f in &factors {
            let grid = fine_grid.coarsen(f)?;
            let bp = bp_fine.coarsen(f);
            let market = realize_market(model, &bp, &grid, corr)?;
            let beta = realize_strategy(beta_spec, &market);
            let euler = evolve_relative_div_feedback(&market, &beta, theta, h, x0)?;
            let mut sup = 0.0f64;
            for (k, v) in euler.values.iter().enumerate() {
                let r = reference[k * f];
                sup = sup.max((v - r).abs() / r);
            }
            errs.push(sup);
        }
        Ok(errs)
    };

    let all: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| per_path(i as u64))
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = (0..dts.len())
        .map(|l| all.iter().map(|e| e[l]).sum::<f64>() / n_paths as f64)
        .collect();
    let order = fit_order(dts, &errors)?;
    Ok(ConvergenceReport {
        dts: dts.to_vec(),
        errors,
        order,
    })
}

/// Strong order of the log-Euler wealth evolution against a fine-grid
/// reference of the same path, for a state-dependent strategy.
#[allow(clippy::too_many_arguments)]
pub fn wealth_strong_order(
    model: &CoefficientModel,
    corr: &CorrelationSpec,
    strategy_spec: &StrategySpec,
    x0: f64,
    horizon: f64,
    dts: &[f64],
    refine: usize,
    seed: RngSeed,
    n_paths: usize,
) -> Result<ConvergenceReport> {
    let dt_min = dts.iter().copied().fold(f64::INFINITY, f64::min);
    let fine_dt = dt_min / refine.max(1) as f64;
    let fine_steps = (horizon / fine_dt).round() as usize;
    let fine_grid = TimeGrid::uniform(horizon, fine_steps)?;
    let factors: Vec<usize> = dts
        .iter()
        .map(|&dt| (dt / fine_dt).round() as usize)
        .collect();

    let per_path = |idx: u64| -> Result<Vec<f64>> {
        let bp_fine = sample_brownian_single(&fine_grid, corr, seed, idx)?;
        let market_fine = realize_market(model, &bp_fine, &fine_grid, corr)?;
        let s_fine = realize_strategy(strategy_spec, &market_fine);
        let reference = crate::wealth::evolve_wealth_spec(&market_fine, &s_fine, x0, Manager::One)?;
        let ref_t = *reference.values.last().unwrap();
        let mut errs = Vec::with_capacity(factors.len());
        for &f in &factors {
            let grid = fine_grid.coarsen(f)?;
            let bp = bp_fine.coarsen(f);
            let market = realize_market(model, &bp, &grid, corr)?;
            let s = realize_strategy(strategy_spec, &market);
            let w = crate::wealth::evolve_wealth_spec(&market, &s, x0, Manager::One)?;
            errs.push((w.values.last().unwrap() - ref_t).abs() / ref_t);
        }
        Ok(errs)
    };
    let all: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| per_path(i as u64))
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = (0..dts.len())
        .map(|l| all.iter().map(|e| e[l]).sum::<f64>() / n_paths as f64)
        .collect();
    let order = fit_order(dts, &errors)?;
    Ok(ConvergenceReport {
        dts: dts.to_vec(),
        errors,
        order,
    })
}

/// Convenience bundle: realizes one market path for a model/seed/index.
pub fn market_for_path(
    model: &CoefficientModel,
    corr: &CorrelationSpec,
    grid: &TimeGrid,
    seed: RngSeed,
    idx: u64,
) -> Result<MarketPath> {
    let bp: BrownianPair = sample_brownian_single(grid, corr, seed, idx)?;
    realize_market(model, &bp, grid, corr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::{Atom, AtomicMeasure};

    #[test]
    fn constant_value_path_is_exactly_martingale_consistent() {
        let times: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let stats: Vec<PathStats> = (0..MIN_ENSEMBLE)
            .map(|_| value_path_stats(&times, &[3.5; 11]))
            .collect();
        let r = martingale_test(&stats, 3.0).unwrap();
        assert_eq!(r.terminal_mean, 3.5);
        assert_eq!(r.terminal_se, 0.0);
        // slope of a constant path is zero up to the centering round-off
        assert!(r.drift_slope.abs() < 1e-14);
        assert!(r.martingale_consistent && r.supermartingale_consistent);
    }

    #[test]
    fn small_ensembles_are_rejected() {
        let times = vec![0.0, 1.0];
        let stats: Vec<PathStats> = (0..10)
            .map(|_| value_path_stats(&times, &[1.0, 1.0]))
            .collect();
        assert!(matches!(
            martingale_test(&stats, 3.0),
            Err(Error::DegenerateEnsemble(10))
        ));
    }

    #[test]
    fn slope_stat_recovers_linear_drift() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        let values: Vec<f64> = times.iter().map(|t| 2.0 - 0.7 * t).collect();
        let s = value_path_stats(&times, &values);
        assert!((s.slope_stat + 0.7).abs() < 1e-12);
    }

    #[test]
    fn fit_order_recovers_power_law() {
        let dts = [4e-3f64, 2e-3, 1e-3];
        let errors: Vec<f64> = dts.iter().map(|d| 0.3 * d.powf(0.5)).collect();
        assert!((fit_order(&dts, &errors).unwrap() - 0.5).abs() < 1e-12);
        assert!(fit_order(&dts[..2], &errors[..2]).is_err());
    }

    #[test]
    fn eta_polynomial_matches_direct_form() {
        // same frozen node as the strategies tests: 0.0625
        let [c0, c1, c2] = eta_beta_polynomial(0.3, 0.2, 0.2, 0.5, 0.5, 2.0);
        let eta = c0 + c1 * 1.0 + c2 * 1.0;
        assert!((eta - 0.0625).abs() < 1e-14);
    }

    #[test]
    fn eta_positive_root_exists_iff_parabola_opens_down() {
        // theta = 1, gamma = 3, rho = 0.3: c2 < 0 and a positive root exists
        let root = eta_positive_root(0.3, 0.3, 0.2, 0.3, 1.0, 3.0);
        let beta = root.expect("open-down parabola must cross zero");
        let [c0, c1, c2] = eta_beta_polynomial(0.3, 0.3, 0.2, 0.3, 1.0, 3.0);
        let eta = c0 + c1 * beta + c2 * beta * beta;
        assert!(eta.abs() < 1e-10, "eta at root {eta}");
        // gamma = 2, theta = 0.5 keeps c2 > 0: no root
        assert!(eta_positive_root(0.3, 0.3, 0.2, 0.3, 0.5, 2.0).is_none());
    }

    #[test]
    fn u_flow_fd_residual_shrinks_at_second_order() {
        let h = HeatFunction::new(
            AtomicMeasure::new(vec![Atom { y: 0.5, w: 1.0 }, Atom { y: 2.0, w: 0.4 }]).unwrap(),
        );
        let u = ForwardUtility::new(h).unwrap();
        let points = [(1.0, 0.5), (2.0, 1.0), (0.6, 0.8)];
        let spacings = [2e-2, 1e-2, 5e-3, 2.5e-3];
        let report = u_flow_residual_fd(&u, &points, &spacings).unwrap();
        assert!(
            (report.order - 2.0).abs() < 0.35,
            "order {} errors {:?}",
            report.order,
            report.errors
        );
    }
}
