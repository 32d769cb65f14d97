//! Closed-form best-response and Nash-equilibrium strategies and value
//! processes for CRRA and log preferences, in both settings, plus the
//! general feedback weights and the worthless-competitor policy.

use crate::criteria::{compute_a_m, compute_b, AtomicMeasure, ForwardUtility, HeatFunction};
use crate::market::MarketPath;
use crate::wealth::{
    competition_quadratic, div_sharpe_node, modified_sharpe_div, modified_sharpe_spec, StrategyPath,
};
use crate::{CompetitionParams, Error, Manager, Result, Setting};

/// Risk preferences: CRRA with `gamma > 0`, `gamma != 1`, or the log variant
/// (unit relative risk tolerance).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskPreference {
    Crra { gamma: f64 },
    Log,
}

impl RiskPreference {
    pub fn validate(&self) -> Result<()> {
        if let RiskPreference::Crra { gamma } = *self {
            check_gamma(gamma)?;
        }
        Ok(())
    }

    /// Relative risk tolerance, `1/gamma` or 1.
    pub fn risk_tolerance(&self) -> f64 {
        match *self {
            RiskPreference::Crra { gamma } => 1.0 / gamma,
            RiskPreference::Log => 1.0,
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite() && gamma != 1.0) {
        return Err(Error::InvalidGamma(gamma));
    }
    Ok(())
}

fn check_gamma_allow_unit(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidGamma(gamma));
    }
    Ok(())
}

/// Determinant threshold below which the Nash systems are treated as
/// singular.
pub const EQUILIBRIUM_DET_EPS: f64 = 1e-9;

/// Which algebraic arrangement of the exponent process to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtaForm {
    /// Quadratic in the modified Sharpe ratios.
    Direct,
    /// Completed-square rewriting in the original Sharpe ratios.
    Rewritten,
}

/// The exponent process of the homothetic criterion for one manager.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaPath {
    pub manager: Manager,
    pub form: EtaForm,
    pub values: Vec<f64>,
}

/// A value-process sample `V(x~_k, t_k)` along a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuePath {
    pub values: Vec<f64>,
    pub label: String,
}

/// A Nash equilibrium: both strategies, the system determinant and the two
/// equilibrium value processes (each evaluated at a fixed relative wealth).
#[derive(Debug, Clone, PartialEq)]
pub struct NashOutcome {
    pub setting: Setting,
    pub alpha: StrategyPath,
    pub beta: StrategyPath,
    pub determinant: f64,
    pub value1: ValuePath,
    pub value2: ValuePath,
}

/// Specialization exponent process.
///
/// Direct form for manager 1 (competitor plays the scalar `beta`):
///
/// ```text
/// eta_1 = l1^2 + 2 (rho l1 - l2) theta sigma2 beta gamma
///         - (1 - rho^2) theta^2 sigma2^2 beta^2 gamma^2,
/// ```
///
/// with `(l1, l2)` the modified Sharpe pair. Manager 2 is the mirror image
/// with `eta_2 = l2^2 + 2 (rho l2 - l1) theta sigma1 alpha gamma - ...`.
/// The rewritten form completes the square in the original Sharpe ratios;
/// the two agree nodewise.
pub fn eta_spec(
    market: &MarketPath,
    competitor: &StrategyPath,
    theta: f64,
    gamma: f64,
    manager: Manager,
    form: EtaForm,
) -> Result<EtaPath> {
    check_gamma_allow_unit(gamma)?;
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidTheta(theta));
    }
    let pi = competitor.scalar()?;
    competitor.validate_finite()?;
    let rho = market.rho;
    let sharpe = modified_sharpe_spec(market, competitor, theta, manager)?;
    let n = market.len();
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let sigma_other = match manager {
            Manager::One => market.sigma2[k],
            Manager::Two => market.sigma1[k],
        };
        let b = theta * sigma_other * pi[k];
        let v = match form {
            EtaForm::Direct => {
                let (own, cross) = match manager {
                    Manager::One => (sharpe.l1[k], sharpe.l2[k]),
                    Manager::Two => (sharpe.l2[k], sharpe.l1[k]),
                };
                own * own + 2.0 * (rho * own - cross) * b * gamma
                    - (1.0 - rho * rho) * b * b * gamma * gamma
            }
            EtaForm::Rewritten => {
                let (lam_own, lam_cross) = match manager {
                    Manager::One => (market.lambda1[k], market.lambda2[k]),
                    Manager::Two => (market.lambda2[k], market.lambda1[k]),
                };
                let delta = gamma * lam_cross / lam_own + rho * (1.0 - gamma);
                let lin = lam_own - delta * b;
                lin * lin
                    + (rho * rho * (1.0 - gamma) * (1.0 - gamma)
                        + gamma * (1.0 - gamma + 1.0 / theta)
                        - delta * delta)
                        * b
                        * b
            }
        };
        values.push(v);
    }
    Ok(EtaPath {
        manager,
        form,
        values,
    })
}

/// CRRA best-response value process along a relative wealth sample:
/// `V_k = x_k^{1-gamma}/(1-gamma) * exp(-int_0^{t_k} (1-gamma)/(2 gamma) eta ds)`
/// with left-endpoint quadrature of the exponent.
pub fn crra_value_spec(
    x_rel: &[f64],
    market: &MarketPath,
    eta: &EtaPath,
    gamma: f64,
) -> Result<ValuePath> {
    check_gamma(gamma)?;
    let n = market.len();
    if x_rel.len() != n || eta.values.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: x_rel.len().min(eta.values.len()),
        });
    }
    let c = (1.0 - gamma) / (2.0 * gamma);
    let mut integral = 0.0;
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        if k > 0 {
            integral += eta.values[k - 1] * market.grid.dt(k - 1);
        }
        values.push(x_rel[k].powf(1.0 - gamma) / (1.0 - gamma) * (-c * integral).exp());
    }
    Ok(ValuePath {
        values,
        label: format!("crra_value(gamma={gamma})"),
    })
}

/// Log best-response value and strategy for `manager` in the specialization
/// setting. The exponent is the `gamma -> 1` limit of the CRRA family:
///
/// ```text
/// V = ln x~ - 1/2 int eta|_{gamma=1} ds,
/// pi* = l_own / sigma_own + rho theta (sigma_other / sigma_own) pi_other,
/// ```
///
/// which is exactly the drift-cancelling constant for `ln X~` under `pi*`.
pub fn log_value_spec(
    x_rel: &[f64],
    market: &MarketPath,
    competitor: &StrategyPath,
    theta: f64,
    manager: Manager,
) -> Result<(ValuePath, StrategyPath)> {
    let eta = eta_spec(market, competitor, theta, 1.0, manager, EtaForm::Direct)?;
    let n = market.len();
    if x_rel.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: x_rel.len(),
        });
    }
    let mut integral = 0.0;
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        if k > 0 {
            integral += eta.values[k - 1] * market.grid.dt(k - 1);
        }
        values.push(x_rel[k].ln() - 0.5 * integral);
    }
    let strategy = best_response_spec(market, competitor, theta, 1.0, manager)?;
    Ok((
        ValuePath {
            values,
            label: "log_value".into(),
        },
        strategy,
    ))
}

/// Specialization best response in modified-Sharpe form:
/// `pi* = (1/gamma) l_own / sigma_own + rho theta (sigma_other/sigma_own) pi_other`.
/// `gamma = 1` is the log case (unit risk tolerance).
pub fn best_response_spec(
    market: &MarketPath,
    competitor: &StrategyPath,
    theta: f64,
    gamma: f64,
    manager: Manager,
) -> Result<StrategyPath> {
    check_gamma_allow_unit(gamma)?;
    let pi = competitor.scalar()?;
    competitor.validate_finite()?;
    let sharpe = modified_sharpe_spec(market, competitor, theta, manager)?;
    let rho = market.rho;
    let values = (0..market.len())
        .map(|k| {
            let (own_l, s_own, s_other) = match manager {
                Manager::One => (sharpe.l1[k], market.sigma1[k], market.sigma2[k]),
                Manager::Two => (sharpe.l2[k], market.sigma2[k], market.sigma1[k]),
            };
            own_l / (gamma * s_own) + rho * theta * (s_other / s_own) * pi[k]
        })
        .collect();
    Ok(StrategyPath::Scalar(values))
}

/// The same best response written against the original Sharpe ratio:
/// `pi* = (1/gamma) lambda_own / sigma_own + rho theta (1 - 1/gamma)
/// (sigma_other / sigma_own) pi_other`. Agrees nodewise with
/// [`best_response_spec`].
pub fn best_response_spec_alt(
    market: &MarketPath,
    competitor: &StrategyPath,
    theta: f64,
    gamma: f64,
    manager: Manager,
) -> Result<StrategyPath> {
    check_gamma_allow_unit(gamma)?;
    let pi = competitor.scalar()?;
    competitor.validate_finite()?;
    let rho = market.rho;
    let values = (0..market.len())
        .map(|k| {
            let (lam, s_own, s_other) = match manager {
                Manager::One => (market.lambda1[k], market.sigma1[k], market.sigma2[k]),
                Manager::Two => (market.lambda2[k], market.sigma2[k], market.sigma1[k]),
            };
            lam / (gamma * s_own) + rho * theta * (1.0 - 1.0 / gamma) * (s_other / s_own) * pi[k]
        })
        .collect();
    Ok(StrategyPath::Scalar(values))
}

/// Specialization forward Nash equilibrium for CRRA managers.
///
/// Solves the linear best-response system; the determinant is
/// `delta = gamma1 gamma2 - rho^2 theta1 theta2 (1-gamma1)(1-gamma2)` and
/// must stay away from zero. When both coupling terms vanish (e.g. `rho = 0`)
/// the system decouples and each strategy is evaluated directly as
/// `lambda / (gamma sigma)`.
pub fn nash_spec(
    market: &MarketPath,
    gamma1: f64,
    gamma2: f64,
    params: &CompetitionParams,
    x1_rel: f64,
    x2_rel: f64,
) -> Result<NashOutcome> {
    check_gamma(gamma1)?;
    check_gamma(gamma2)?;
    let rho = market.rho;
    let k1 = rho * params.theta1 * (1.0 - gamma1);
    let k2 = rho * params.theta2 * (1.0 - gamma2);
    let det = gamma1 * gamma2
        - rho * rho * params.theta1 * params.theta2 * (1.0 - gamma1) * (1.0 - gamma2);
    if det.abs() <= EQUILIBRIUM_DET_EPS {
        return Err(Error::NoEquilibrium(det));
    }
    let n = market.len();
    let decoupled = k1 == 0.0 && k2 == 0.0;
    let mut alpha = Vec::with_capacity(n);
    let mut beta = Vec::with_capacity(n);
    for k in 0..n {
        let (l1, l2) = (market.lambda1[k], market.lambda2[k]);
        let (s1, s2) = (market.sigma1[k], market.sigma2[k]);
        if decoupled {
            alpha.push(l1 / (gamma1 * s1));
            beta.push(l2 / (gamma2 * s2));
        } else {
            alpha.push((gamma2 * l1 - k1 * l2) / (s1 * det));
            beta.push((gamma1 * l2 - k2 * l1) / (s2 * det));
        }
    }
    let alpha = StrategyPath::Scalar(alpha);
    let beta = StrategyPath::Scalar(beta);
    let eta1 = eta_spec(
        market,
        &beta,
        params.theta1,
        gamma1,
        Manager::One,
        EtaForm::Direct,
    )?;
    let eta2 = eta_spec(
        market,
        &alpha,
        params.theta2,
        gamma2,
        Manager::Two,
        EtaForm::Direct,
    )?;
    let value1 = crra_value_spec(&vec![x1_rel; n], market, &eta1, gamma1)?;
    let value2 = crra_value_spec(&vec![x2_rel; n], market, &eta2, gamma2)?;
    Ok(NashOutcome {
        setting: Setting::Specialization,
        alpha,
        beta,
        determinant: det,
        value1,
        value2,
    })
}

/// Diversification best response in modified-Sharpe coordinates:
///
/// ```text
/// pi*_1 = (l1 - rho l2) / ((1 - rho^2) sigma1) * H + theta psi_1,
/// pi*_2 = (l2 - rho l1) / ((1 - rho^2) sigma2) * H + theta psi_2,
/// ```
///
/// where `H` is the risk-tolerance process of the manager's criterion
/// (`1/gamma` constant for the Dirac measure) and `psi` is the competitor's
/// strategy. A worthless personalized market (`l = 0`) passes `theta psi`
/// through exactly.
pub fn best_response_div(
    market: &MarketPath,
    competitor: &StrategyPath,
    theta: f64,
    h_path: &[f64],
    manager: Manager,
) -> Result<StrategyPath> {
    let psi = competitor.pair()?;
    competitor.validate_finite()?;
    if h_path.len() != market.len() {
        return Err(Error::LengthMismatch {
            expected: market.len(),
            got: h_path.len(),
        });
    }
    let sharpe = modified_sharpe_div(market, competitor, theta, manager)?;
    let rho = market.rho;
    let omr = 1.0 - rho * rho;
    let values = (0..market.len())
        .map(|k| {
            let (l1, l2) = (sharpe.l1[k], sharpe.l2[k]);
            [
                (l1 - rho * l2) / (omr * market.sigma1[k]) * h_path[k] + theta * psi[k][0],
                (l2 - rho * l1) / (omr * market.sigma2[k]) * h_path[k] + theta * psi[k][1],
            ]
        })
        .collect();
    Ok(StrategyPath::Pair(values))
}

/// The same best response in original market coordinates:
/// `pi*_i = m_i H + (1 - H) theta psi_i` with
/// `m_1 = (lambda1 - rho lambda2)/((1-rho^2) sigma1)` and symmetrically
/// `m_2`. Agrees nodewise with [`best_response_div`].
pub fn best_response_div_original(
    market: &MarketPath,
    competitor: &StrategyPath,
    theta: f64,
    h_path: &[f64],
    manager: Manager,
) -> Result<StrategyPath> {
    let psi = competitor.pair()?;
    competitor.validate_finite()?;
    if h_path.len() != market.len() {
        return Err(Error::LengthMismatch {
            expected: market.len(),
            got: h_path.len(),
        });
    }
    let _ = manager;
    let rho = market.rho;
    let omr = 1.0 - rho * rho;
    let values = (0..market.len())
        .map(|k| {
            let m1 = (market.lambda1[k] - rho * market.lambda2[k]) / (omr * market.sigma1[k]);
            let m2 = (market.lambda2[k] - rho * market.lambda1[k]) / (omr * market.sigma2[k]);
            let h = h_path[k];
            [
                m1 * h + (1.0 - h) * theta * psi[k][0],
                m2 * h + (1.0 - h) * theta * psi[k][1],
            ]
        })
        .collect();
    Ok(StrategyPath::Pair(values))
}

/// The competitor policy that makes the manager's personalized
/// diversification market worthless: both modified risk premia vanish.
///
/// Defined by the vanishing property, i.e. the 2x2 linear system
/// `sigma1 b1 + rho sigma2 b2 = lambda1 / theta`,
/// `rho sigma1 b1 + sigma2 b2 = lambda2 / theta`, which gives
/// `sigma_i b_i = (lambda_i - rho lambda_j) / (theta (1 - rho^2))`. After the
/// closed-form solve, each node is refined over a few-ulp neighborhood so
/// the floating-point evaluation of the premia used everywhere else lands on
/// exactly 0.0 whenever such a representable point exists.
pub fn worthless_competitor(market: &MarketPath, theta: f64) -> Result<StrategyPath> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidTheta(theta));
    }
    let rho = market.rho;
    if rho.abs() >= 1.0 {
        return Err(Error::DegenerateCorrelation);
    }
    let omr = 1.0 - rho * rho;
    let n = market.len();
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let (l1, l2) = (market.lambda1[k], market.lambda2[k]);
        let (s1, s2) = (market.sigma1[k], market.sigma2[k]);
        let b1 = (l1 - rho * l2) / (theta * omr * s1);
        let b2 = (l2 - rho * l1) / (theta * omr * s2);

        let premia = |cand: [f64; 2]| div_sharpe_node(l1, l2, s1, s2, rho, theta, cand);
        let mut best = [b1, b2];
        let (p1, p2) = premia(best);
        let mut best_score = p1.abs().max(p2.abs());
        if best_score != 0.0 {
            'search: for radius in 1..=6i32 {
                for d1 in -radius..=radius {
                    for d2 in -radius..=radius {
                        if d1.abs().max(d2.abs()) != radius {
                            continue;
                        }
                        let cand = [step_ulps(b1, d1), step_ulps(b2, d2)];
                        let (q1, q2) = premia(cand);
                        let score = q1.abs().max(q2.abs());
                        if score < best_score {
                            best = cand;
                            best_score = score;
                        }
                        if score == 0.0 {
                            break 'search;
                        }
                    }
                }
            }
        }
        values.push(best);
    }
    Ok(StrategyPath::Pair(values))
}

fn step_ulps(x: f64, n: i32) -> f64 {
    let mut v = x;
    for _ in 0..n.abs() {
        v = if n > 0 { v.next_up() } else { v.next_down() };
    }
    v
}

/// Diversification forward Nash equilibrium for CRRA managers:
/// `alpha* = c_alpha (m_1, m_2)`, `beta* = c_beta (m_1, m_2)` with
///
/// ```text
/// c_alpha = (gamma2 + theta1 (gamma1 - 1)) / den,
/// c_beta  = (gamma1 + theta2 (gamma2 - 1)) / den,
/// den     = gamma1 gamma2 - theta1 theta2 (1 - gamma1)(1 - gamma2).
/// ```
pub fn nash_div(
    market: &MarketPath,
    gamma1: f64,
    gamma2: f64,
    params: &CompetitionParams,
    x1_rel: f64,
    x2_rel: f64,
) -> Result<NashOutcome> {
    check_gamma(gamma1)?;
    check_gamma(gamma2)?;
    let den = gamma1 * gamma2 - params.theta1 * params.theta2 * (1.0 - gamma1) * (1.0 - gamma2);
    if den.abs() <= EQUILIBRIUM_DET_EPS {
        return Err(Error::NoEquilibrium(den));
    }
    let c_alpha = (gamma2 + params.theta1 * (gamma1 - 1.0)) / den;
    let c_beta = (gamma1 + params.theta2 * (gamma2 - 1.0)) / den;
    let rho = market.rho;
    let omr = 1.0 - rho * rho;
    let n = market.len();
    let mut alpha = Vec::with_capacity(n);
    let mut beta = Vec::with_capacity(n);
    for k in 0..n {
        let m1 = (market.lambda1[k] - rho * market.lambda2[k]) / (omr * market.sigma1[k]);
        let m2 = (market.lambda2[k] - rho * market.lambda1[k]) / (omr * market.sigma2[k]);
        alpha.push([c_alpha * m1, c_alpha * m2]);
        beta.push([c_beta * m1, c_beta * m2]);
    }
    let alpha = StrategyPath::Pair(alpha);
    let beta = StrategyPath::Pair(beta);
    let value1 = dirac_value_div(market, &beta, params.theta1, gamma1, Manager::One, x1_rel)?;
    let value2 = dirac_value_div(market, &alpha, params.theta2, gamma2, Manager::Two, x2_rel)?;
    Ok(NashOutcome {
        setting: Setting::Diversification,
        alpha,
        beta,
        determinant: den,
        value1,
        value2,
    })
}

/// CRRA (Dirac-measure) forward value of `manager` in the diversification
/// setting, at fixed relative wealth, along the competitor's strategy:
/// `V(x~, t) = u(x~ / B_t, A_t)`.
pub fn dirac_value_div(
    market: &MarketPath,
    competitor: &StrategyPath,
    theta: f64,
    gamma: f64,
    manager: Manager,
    x_rel: f64,
) -> Result<ValuePath> {
    check_gamma(gamma)?;
    if !(x_rel > 0.0) {
        return Err(Error::NonPositiveWealth(x_rel));
    }
    let sharpe = modified_sharpe_div(market, competitor, theta, manager)?;
    let (a_path, _) = compute_a_m(&sharpe, market)?;
    let c_path = competition_quadratic(&market.sigma1, &market.sigma2, market.rho, competitor)?;
    let b_path = compute_b(theta, &c_path, &market.grid)?;
    let h = HeatFunction::new(AtomicMeasure::dirac_crra(gamma)?);
    let u = ForwardUtility::new(h)?;
    let values = a_path
        .values
        .iter()
        .zip(&b_path.values)
        .map(|(&a, &b)| u.u(x_rel / b, a))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ValuePath {
        values,
        label: format!("dirac_value_div(gamma={gamma})"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{
        realize_market, sample_brownian_single, CoefficientModel, CorrelationSpec, RngSeed,
        TimeGrid,
    };

    fn market(rho: f64, lambda: [f64; 2], sigma: [f64; 2], idx: u64) -> MarketPath {
        let grid = TimeGrid::uniform(1.0, 40).unwrap();
        let corr = CorrelationSpec::new(rho).unwrap();
        let mu = [lambda[0] * sigma[0] + 0.01, lambda[1] * sigma[1] + 0.01];
        let model = CoefficientModel::constant(mu, sigma, 0.01);
        let bp = sample_brownian_single(&grid, &corr, RngSeed::new(23), idx).unwrap();
        realize_market(&model, &bp, &grid, &corr).unwrap()
    }

    #[test]
    fn eta_reduces_to_lambda_squared_without_competition() {
        let m = market(0.5, [0.3, 0.2], [0.2, 0.2], 0);
        let zero = StrategyPath::constant_scalar(m.len(), 0.0);
        let eta = eta_spec(&m, &zero, 0.5, 2.0, Manager::One, EtaForm::Direct).unwrap();
        assert!(eta.values.iter().all(|&v| (v - 0.09).abs() < 1e-15));
        // theta -> 0 limit: evaluate at a tiny theta
        let beta = StrategyPath::constant_scalar(m.len(), 1.0);
        let eta = eta_spec(&m, &beta, 1e-9, 2.0, Manager::One, EtaForm::Direct).unwrap();
        assert!((eta.values[0] - 0.09).abs() < 1e-8);
    }

    #[test]
    fn eta_numeric_node_from_expanded_polynomial() {
        // Independent route: eta expanded as a polynomial in beta,
        //   eta = lambda1^2 - 2 theta sigma2 beta (gamma lambda2 + rho (1-gamma) lambda1)
        //         + sigma2^2 beta^2 (rho^2 theta^2 (1-gamma)^2 + theta^2 gamma (1-gamma) + theta gamma).
        // At lambda = (0.3, 0.2), sigma2 = 0.2, rho = 0.5, theta = 0.5,
        // beta = 1, gamma = 2 this evaluates to 0.0625.
        let m = market(0.5, [0.3, 0.2], [0.2, 0.2], 0);
        let beta = StrategyPath::constant_scalar(m.len(), 1.0);
        for form in [EtaForm::Direct, EtaForm::Rewritten] {
            let eta = eta_spec(&m, &beta, 0.5, 2.0, Manager::One, form).unwrap();
            assert!(
                (eta.values[0] - 0.0625).abs() < 1e-14,
                "{form:?}: {}",
                eta.values[0]
            );
        }
    }

    #[test]
    fn eta_forms_agree_on_random_nodes() {
        let m = market(-0.4, [0.25, 0.35], [0.15, 0.3], 1);
        for (gamma, theta, b) in [(0.7, 0.3, 0.9), (2.5, 1.0, -0.6), (5.0, 0.8, 0.2)] {
            let beta = StrategyPath::constant_scalar(m.len(), b);
            let d = eta_spec(&m, &beta, theta, gamma, Manager::One, EtaForm::Direct).unwrap();
            let r = eta_spec(&m, &beta, theta, gamma, Manager::One, EtaForm::Rewritten).unwrap();
            for k in 0..m.len() {
                assert!(
                    (d.values[k] - r.values[k]).abs() <= 1e-10 * (1.0 + d.values[k].abs()),
                    "forms disagree at node {k}: {} vs {}",
                    d.values[k],
                    r.values[k]
                );
            }
            // manager 2 mirror
            let alpha = StrategyPath::constant_scalar(m.len(), b);
            let d = eta_spec(&m, &alpha, theta, gamma, Manager::Two, EtaForm::Direct).unwrap();
            let r = eta_spec(&m, &alpha, theta, gamma, Manager::Two, EtaForm::Rewritten).unwrap();
            for k in 0..m.len() {
                assert!((d.values[k] - r.values[k]).abs() <= 1e-10 * (1.0 + d.values[k].abs()));
            }
        }
    }

    #[test]
    fn crra_value_at_time_zero_and_no_competition() {
        let m = market(0.0, [0.3, 0.3], [0.2, 0.2], 0);
        let zero = StrategyPath::constant_scalar(m.len(), 0.0);
        let eta = eta_spec(&m, &zero, 0.5, 2.0, Manager::One, EtaForm::Direct).unwrap();
        let x = vec![1.7; m.len()];
        let v = crra_value_spec(&x, &m, &eta, 2.0).unwrap();
        assert!((v.values[0] - 1.7f64.powf(-1.0) / (-1.0)).abs() < 1e-15);
        // theta-free reduction: exponent integrates lambda^2
        let t = m.grid.t(20);
        let expect = 1.7f64.powf(-1.0) / (-1.0) * (0.25 * 0.09 * t).exp();
        assert!((v.values[20] - expect).abs() < 1e-12 * expect.abs());
        assert!(crra_value_spec(&x, &m, &eta, 1.0).is_err());
    }

    #[test]
    fn log_value_idle_competitor() {
        // beta = 0: V = ln x~ - 1/2 int lambda1^2 ds and pi* = lambda1 / sigma1.
        let m = market(0.3, [0.3, 0.2], [0.2, 0.25], 0);
        let zero = StrategyPath::constant_scalar(m.len(), 0.0);
        let x = vec![2.0; m.len()];
        let (v, s) = log_value_spec(&x, &m, &zero, 0.5, Manager::One).unwrap();
        let t = m.grid.t(30);
        let expect = 2.0f64.ln() - 0.5 * 0.09 * t;
        assert!((v.values[30] - expect).abs() < 1e-13);
        assert!((s.scalar().unwrap()[0] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn log_strategy_is_crra_limit() {
        let m = market(0.6, [0.3, 0.2], [0.2, 0.25], 0);
        let beta = StrategyPath::constant_scalar(m.len(), 0.7);
        let (_, s_log) = log_value_spec(&vec![1.0; m.len()], &m, &beta, 0.5, Manager::One).unwrap();
        let s_one = best_response_spec(&m, &beta, 0.5, 1.0, Manager::One).unwrap();
        assert_eq!(s_log, s_one);
    }

    #[test]
    fn best_response_forms_agree_and_reduce() {
        let m = market(0.5, [0.3, 0.2], [0.2, 0.25], 2);
        let beta = StrategyPath::constant_scalar(m.len(), 0.8);
        for (gamma, theta) in [(2.0, 0.5), (0.6, 1.0), (3.5, 0.2)] {
            let a = best_response_spec(&m, &beta, theta, gamma, Manager::One).unwrap();
            let b = best_response_spec_alt(&m, &beta, theta, gamma, Manager::One).unwrap();
            for k in 0..m.len() {
                assert!((a.scalar().unwrap()[k] - b.scalar().unwrap()[k]).abs() <= 1e-12);
            }
            let a2 = best_response_spec(&m, &beta, theta, gamma, Manager::Two).unwrap();
            let b2 = best_response_spec_alt(&m, &beta, theta, gamma, Manager::Two).unwrap();
            for k in 0..m.len() {
                assert!((a2.scalar().unwrap()[k] - b2.scalar().unwrap()[k]).abs() <= 1e-12);
            }
        }
        // rho = 0 and theta -> 0 both collapse to lambda / (gamma sigma)
        let m0 = market(0.0, [0.3, 0.2], [0.2, 0.25], 2);
        let a = best_response_spec(&m0, &beta, 0.5, 2.0, Manager::One).unwrap();
        assert!((a.scalar().unwrap()[0] - 0.3 / (2.0 * 0.2)).abs() < 1e-15);
        let a = best_response_spec(&m, &beta, 1e-12, 2.0, Manager::One).unwrap();
        assert!((a.scalar().unwrap()[0] - 0.75).abs() < 1e-11);
    }

    #[test]
    fn competition_adjustment_sign_tracks_gamma() {
        // adjustment = rho theta (1 - 1/gamma)(sigma2/sigma1) beta:
        // positive for gamma > 1, negative for gamma in (0, 1).
        let m = market(0.5, [0.3, 0.2], [0.2, 0.25], 2);
        let beta = StrategyPath::constant_scalar(m.len(), 0.8);
        for (gamma, positive) in [(2.0, true), (0.5, false)] {
            let with = best_response_spec_alt(&m, &beta, 0.5, gamma, Manager::One).unwrap();
            let zero = StrategyPath::constant_scalar(m.len(), 0.0);
            let without = best_response_spec_alt(&m, &zero, 0.5, gamma, Manager::One).unwrap();
            let adj = with.scalar().unwrap()[0] - without.scalar().unwrap()[0];
            assert_eq!(adj > 0.0, positive, "gamma = {gamma}, adj = {adj}");
        }
    }

    #[test]
    fn ability_increase_raises_own_position() {
        let lo = market(0.5, [0.25, 0.2], [0.2, 0.25], 2);
        let hi = market(0.5, [0.35, 0.2], [0.2, 0.25], 2);
        let beta = StrategyPath::constant_scalar(lo.len(), 0.8);
        for gamma in [0.6, 2.0, 4.0] {
            let a_lo = best_response_spec_alt(&lo, &beta, 0.5, gamma, Manager::One).unwrap();
            let a_hi = best_response_spec_alt(&hi, &beta, 0.5, gamma, Manager::One).unwrap();
            assert!(a_hi.scalar().unwrap()[0] > a_lo.scalar().unwrap()[0]);
        }
    }

    #[test]
    fn nash_spec_determinant_and_decoupling() {
        // gamma = (2, 3), rho = 0.5, theta = (1, 1): det = 6 - 0.25 * 2 = 5.5.
        let m = market(0.5, [0.3, 0.2], [0.2, 0.25], 0);
        let params = CompetitionParams::new(1.0, 1.0).unwrap();
        let out = nash_spec(&m, 2.0, 3.0, &params, 1.0, 1.0).unwrap();
        assert!((out.determinant - 5.5).abs() < 1e-15);

        // rho = 0: exactly the no-competition ratios
        let m0 = market(0.0, [0.3, 0.2], [0.2, 0.25], 0);
        let out = nash_spec(&m0, 2.0, 3.0, &params, 1.0, 1.0).unwrap();
        for k in 0..m0.len() {
            assert_eq!(
                out.alpha.scalar().unwrap()[k],
                m0.lambda1[k] / (2.0 * m0.sigma1[k])
            );
            assert_eq!(
                out.beta.scalar().unwrap()[k],
                m0.lambda2[k] / (3.0 * m0.sigma2[k])
            );
        }
        // but the value processes still feel the opponent through eta
        let idle1 = eta_spec(
            &m0,
            &StrategyPath::constant_scalar(m0.len(), 0.0),
            1.0,
            2.0,
            Manager::One,
            EtaForm::Direct,
        )
        .unwrap();
        let v_idle = crra_value_spec(&vec![1.0; m0.len()], &m0, &idle1, 2.0).unwrap();
        assert!((out.value1.values[20] - v_idle.values[20]).abs() > 1e-6);
    }

    #[test]
    fn nash_singular_systems_are_rejected() {
        // Specialization: gamma = (0.2, 0.5), theta = (1, 1), rho = 0.5 gives
        // det = 0.1 - 0.25 * 0.8 * 0.5 = 0.
        let m = market(0.5, [0.3, 0.2], [0.2, 0.25], 0);
        let params = CompetitionParams::new(1.0, 1.0).unwrap();
        match nash_spec(&m, 0.2, 0.5, &params, 1.0, 1.0).unwrap_err() {
            Error::NoEquilibrium(det) => assert!(det.abs() <= EQUILIBRIUM_DET_EPS),
            other => panic!("expected NoEquilibrium, got {other:?}"),
        }
        // Diversification: gamma = (0.4, 0.6), theta = (1, 1) gives
        // den = 0.24 - 0.6 * 0.4 = 0.
        match nash_div(&m, 0.4, 0.6, &params, 1.0, 1.0).unwrap_err() {
            Error::NoEquilibrium(den) => assert!(den.abs() <= EQUILIBRIUM_DET_EPS),
            other => panic!("expected NoEquilibrium, got {other:?}"),
        }
        // well-conditioned systems pass
        assert!(nash_spec(&m, 2.0, 3.0, &params, 1.0, 1.0).is_ok());
        assert!(nash_div(&m, 2.0, 3.0, &params, 1.0, 1.0).is_ok());
    }

    #[test]
    fn nash_div_constants() {
        let m = market(0.3, [0.3, 0.2], [0.2, 0.25], 0);
        // theta -> 0 diagnostic limit: c_alpha = 1/gamma1, c_beta = 1/gamma2
        let params = CompetitionParams::new(1e-12, 1e-12).unwrap();
        let out = nash_div(&m, 2.0, 4.0, &params, 1.0, 1.0).unwrap();
        let rho = m.rho;
        let m1 = (m.lambda1[0] - rho * m.lambda2[0]) / ((1.0 - rho * rho) * m.sigma1[0]);
        assert!((out.alpha.pair().unwrap()[0][0] - m1 / 2.0).abs() < 1e-10);
        assert!((out.beta.pair().unwrap()[0][0] - m1 / 4.0).abs() < 1e-10);

        // symmetric managers: c = 1/(gamma + theta (1 - gamma))
        let params = CompetitionParams::new(0.6, 0.6).unwrap();
        let out = nash_div(&m, 3.0, 3.0, &params, 1.0, 1.0).unwrap();
        let c = 1.0 / (3.0 + 0.6 * (1.0 - 3.0));
        assert!((out.alpha.pair().unwrap()[0][0] - c * m1).abs() < 1e-14);
        assert!((out.beta.pair().unwrap()[0][0] - c * m1).abs() < 1e-14);
    }

    #[test]
    fn worthless_competitor_zeroes_premia_exactly() {
        let m = market(0.3, [0.3, 0.3], [0.2, 0.2], 0);
        let theta = 0.5;
        let beta0 = worthless_competitor(&m, theta).unwrap();
        let sharpe = modified_sharpe_div(&m, &beta0, theta, Manager::One).unwrap();
        for k in 0..m.len() {
            assert!(
                sharpe.l1[k].abs() <= 1e-12 && sharpe.l2[k].abs() <= 1e-12,
                "premia not vanishing at node {k}: {} {}",
                sharpe.l1[k],
                sharpe.l2[k]
            );
        }
        // best response passes theta * beta0 through
        let n = m.len();
        let h_path = vec![0.5; n];
        let alpha = best_response_div(&m, &beta0, theta, &h_path, Manager::One).unwrap();
        for k in 0..n {
            let expect = [
                theta * beta0.pair().unwrap()[k][0],
                theta * beta0.pair().unwrap()[k][1],
            ];
            let got = alpha.pair().unwrap()[k];
            assert!((got[0] - expect[0]).abs() <= 1e-15 && (got[1] - expect[1]).abs() <= 1e-15);
        }
    }

    #[test]
    fn best_response_div_forms_agree_and_h_one_is_beta_free() {
        let m = market(0.4, [0.3, 0.22], [0.2, 0.3], 3);
        let beta = StrategyPath::constant_pair(m.len(), [0.5, -0.3]);
        let h_path = vec![0.37; m.len()];
        let a = best_response_div(&m, &beta, 0.6, &h_path, Manager::One).unwrap();
        let b = best_response_div_original(&m, &beta, 0.6, &h_path, Manager::One).unwrap();
        for k in 0..m.len() {
            for i in 0..2 {
                assert!(
                    (a.pair().unwrap()[k][i] - b.pair().unwrap()[k][i]).abs() <= 1e-12,
                    "node {k} comp {i}"
                );
            }
        }
        // H = 1: the competitor drops out entirely
        let ones = vec![1.0; m.len()];
        let a1 = best_response_div(&m, &beta, 0.6, &ones, Manager::One).unwrap();
        let zero = StrategyPath::constant_pair(m.len(), [0.0, 0.0]);
        let a2 = best_response_div(&m, &zero, 0.6, &ones, Manager::One).unwrap();
        for k in 0..m.len() {
            for i in 0..2 {
                assert!((a1.pair().unwrap()[k][i] - a2.pair().unwrap()[k][i]).abs() <= 1e-12);
            }
        }
        // Dirac H = 1/gamma with idle competitor: two-asset Merton ratios
        let half = vec![0.5; m.len()];
        let a3 = best_response_div(&m, &zero, 0.6, &half, Manager::One).unwrap();
        let rho = m.rho;
        let expect = (m.lambda1[0] - rho * m.lambda2[0]) / ((1.0 - rho * rho) * m.sigma1[0]) * 0.5;
        assert!((a3.pair().unwrap()[0][0] - expect).abs() <= 1e-14);
    }
}
