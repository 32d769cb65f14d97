//! Wealth and relative-wealth dynamics under given strategies, in both the
//! specialization and diversification settings, plus the modified Sharpe
//! ratios of the personalized fictitious markets.
//!
//! All evolutions use a log-Euler scheme (exponential of drift-corrected
//! increments) with strategies and coefficients sampled at left endpoints:
//! positivity is preserved exactly and zero strategies are exact fixed
//! points. The relative wealth of manager 1 is `X_1 / X_2^theta_1`, with the
//! competitor's strategy entering through the modified Sharpe ratios.

use serde::{Deserialize, Serialize};

use crate::market::{Driver, MarketPath};
use crate::{CompetitionParams, Error, Manager, Result, Setting};

/// A fraction-of-wealth strategy path: scalar in the specialization setting,
/// a 2-vector per node in the diversification setting.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategyPath {
    Scalar(Vec<f64>),
    Pair(Vec<[f64; 2]>),
}

impl StrategyPath {
    pub fn constant_scalar(len: usize, value: f64) -> Self {
        StrategyPath::Scalar(vec![value; len])
    }

    pub fn constant_pair(len: usize, value: [f64; 2]) -> Self {
        StrategyPath::Pair(vec![value; len])
    }

    pub fn setting(&self) -> Setting {
        match self {
            StrategyPath::Scalar(_) => Setting::Specialization,
            StrategyPath::Pair(_) => Setting::Diversification,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            StrategyPath::Scalar(v) => v.len(),
            StrategyPath::Pair(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scalar(&self) -> Result<&[f64]> {
        match self {
            StrategyPath::Scalar(v) => Ok(v),
            StrategyPath::Pair(_) => Err(Error::StrategyShape { expected: "scalar" }),
        }
    }

    pub fn pair(&self) -> Result<&[[f64; 2]]> {
        match self {
            StrategyPath::Pair(v) => Ok(v),
            StrategyPath::Scalar(_) => Err(Error::StrategyShape {
                expected: "two-asset",
            }),
        }
    }

    /// Rejects non-finite entries; on a finite grid this is the discrete
    /// stand-in for square integrability of admissible policies.
    pub fn validate_finite(&self) -> Result<()> {
        let bad = match self {
            StrategyPath::Scalar(v) => v.iter().position(|x| !x.is_finite()),
            StrategyPath::Pair(v) => v
                .iter()
                .position(|x| !(x[0].is_finite() && x[1].is_finite())),
        };
        match bad {
            Some(node) => Err(Error::NonFiniteStrategy { node }),
            None => Ok(()),
        }
    }
}

/// Declarative strategy families for configuration files and studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategySpec {
    ConstantScalar {
        value: f64,
    },
    ConstantPair {
        value: [f64; 2],
    },
    /// `base + slope * t`.
    TimeAffineScalar {
        base: f64,
        slope: f64,
    },
    /// `base + amplitude * tanh(scale * W_d(t))`.
    TanhScalar {
        base: f64,
        amplitude: f64,
        scale: f64,
        driver: Driver,
    },
    /// Component `i` follows `base_i + amplitude_i * tanh(scale * W_i(t))`.
    TanhPair {
        base: [f64; 2],
        amplitude: [f64; 2],
        scale: f64,
    },
}

/// Samples a strategy specification along a realized market path.
pub fn realize_strategy(spec: &StrategySpec, market: &MarketPath) -> StrategyPath {
    let n = market.len();
    match *spec {
        StrategySpec::ConstantScalar { value } => StrategyPath::constant_scalar(n, value),
        StrategySpec::ConstantPair { value } => StrategyPath::constant_pair(n, value),
        StrategySpec::TimeAffineScalar { base, slope } => {
            StrategyPath::Scalar((0..n).map(|k| base + slope * market.grid.t(k)).collect())
        }
        StrategySpec::TanhScalar {
            base,
            amplitude,
            scale,
            driver,
        } => StrategyPath::Scalar(
            (0..n)
                .map(|k| {
                    let w = match driver {
                        Driver::W1 => market.w1[k],
                        Driver::W2 => market.w2[k],
                    };
                    base + amplitude * (scale * w).tanh()
                })
                .collect(),
        ),
        StrategySpec::TanhPair {
            base,
            amplitude,
            scale,
        } => StrategyPath::Pair(
            (0..n)
                .map(|k| {
                    [
                        base[0] + amplitude[0] * (scale * market.w1[k]).tanh(),
                        base[1] + amplitude[1] * (scale * market.w2[k]).tanh(),
                    ]
                })
                .collect(),
        ),
    }
}

/// Strictly positive individual wealth path in discounted units.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthPath {
    pub values: Vec<f64>,
}

/// Strictly positive relative wealth `X_own / X_other^theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeWealthPath {
    pub values: Vec<f64>,
    pub manager: Manager,
    pub theta: f64,
}

/// Modified Sharpe-ratio pair `(lambda~_{m,1}, lambda~_{m,2})` per node for
/// one manager's personalized fictitious market.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedSharpePath {
    pub manager: Manager,
    pub setting: Setting,
    /// Asset-1 component per node.
    pub l1: Vec<f64>,
    /// Asset-2 component per node.
    pub l2: Vec<f64>,
}

fn check_x0(x0: f64) -> Result<()> {
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(Error::NonPositiveWealth(x0));
    }
    Ok(())
}

fn check_len(market: &MarketPath, strategy: &StrategyPath) -> Result<()> {
    if strategy.len() != market.len() {
        return Err(Error::LengthMismatch {
            expected: market.len(),
            got: strategy.len(),
        });
    }
    strategy.validate_finite()
}

/// Evolves an individual wealth `dX/X = sigma pi (lambda dt + dW)` for the
/// manager specializing in `asset`.
pub fn evolve_wealth_spec(
    market: &MarketPath,
    strategy: &StrategyPath,
    x0: f64,
    asset: Manager,
) -> Result<WealthPath> {
    check_x0(x0)?;
    check_len(market, strategy)?;
    let pi = strategy.scalar()?;
    let n = market.len();
    let mut values = Vec::with_capacity(n);
    values.push(x0);
    for k in 0..n - 1 {
        let (sigma, lambda, dw) = match asset {
            Manager::One => (market.sigma1[k], market.lambda1[k], market.dw(k).0),
            Manager::Two => (market.sigma2[k], market.lambda2[k], market.dw(k).1),
        };
        let expo = sigma * pi[k];
        let dt = market.grid.dt(k);
        let inc = (expo * lambda - 0.5 * expo * expo) * dt + expo * dw;
        values.push(values[k] * inc.exp());
    }
    Ok(WealthPath { values })
}

/// Evolves an individual wealth under a two-asset strategy,
/// `dX/X = sum_i sigma_i pi_i (lambda_i dt + dW_i)`.
pub fn evolve_wealth_div(
    market: &MarketPath,
    strategy: &StrategyPath,
    x0: f64,
) -> Result<WealthPath> {
    check_x0(x0)?;
    check_len(market, strategy)?;
    let pi = strategy.pair()?;
    let n = market.len();
    let rho = market.rho;
    let mut values = Vec::with_capacity(n);
    values.push(x0);
    for k in 0..n - 1 {
        let e1 = market.sigma1[k] * pi[k][0];
        let e2 = market.sigma2[k] * pi[k][1];
        let qv = e1 * e1 + 2.0 * rho * e1 * e2 + e2 * e2;
        let dt = market.grid.dt(k);
        let (dw1, dw2) = market.dw(k);
        let inc =
            (e1 * market.lambda1[k] + e2 * market.lambda2[k] - 0.5 * qv) * dt + e1 * dw1 + e2 * dw2;
        values.push(values[k] * inc.exp());
    }
    Ok(WealthPath { values })
}

/// Specialization modified Sharpe ratios of one manager's fictitious market,
/// given the competitor's scalar strategy.
pub fn modified_sharpe_spec(
    market: &MarketPath,
    competitor: &StrategyPath,
    theta: f64,
    manager: Manager,
) -> Result<ModifiedSharpePath> {
    check_len(market, competitor)?;
    let pi = competitor.scalar()?;
    let n = market.len();
    let rho = market.rho;
    let mut l1 = Vec::with_capacity(n);
    let mut l2 = Vec::with_capacity(n);
    for k in 0..n {
        match manager {
            Manager::One => {
                l1.push(market.lambda1[k] - rho * market.sigma2[k] * theta * pi[k]);
                l2.push(market.lambda2[k] - 0.5 * market.sigma2[k] * (1.0 + theta) * pi[k]);
            }
            Manager::Two => {
                l1.push(market.lambda1[k] - 0.5 * market.sigma1[k] * (1.0 + theta) * pi[k]);
                l2.push(market.lambda2[k] - rho * market.sigma1[k] * theta * pi[k]);
            }
        }
    }
    Ok(ModifiedSharpePath {
        manager,
        setting: Setting::Specialization,
        l1,
        l2,
    })
}

/// Diversification modified Sharpe pair at one node. Shared by the path
/// builder and the worthless-competitor solver so both see identical
/// floating-point rounding.
#[inline]
pub(crate) fn div_sharpe_node(
    lambda1: f64,
    lambda2: f64,
    sigma1: f64,
    sigma2: f64,
    rho: f64,
    theta: f64,
    pi: [f64; 2],
) -> (f64, f64) {
    let l1 = lambda1 - theta * (sigma1 * pi[0] + rho * (sigma2 * pi[1]));
    let l2 = lambda2 - theta * (rho * (sigma1 * pi[0]) + sigma2 * pi[1]);
    (l1, l2)
}

/// Diversification modified Sharpe ratios given the competitor's 2-vector
/// strategy.
pub fn modified_sharpe_div(
    market: &MarketPath,
    competitor: &StrategyPath,
    theta: f64,
    manager: Manager,
) -> Result<ModifiedSharpePath> {
    check_len(market, competitor)?;
    let pi = competitor.pair()?;
    let n = market.len();
    let mut l1 = Vec::with_capacity(n);
    let mut l2 = Vec::with_capacity(n);
    for k in 0..n {
        let (a, b) = div_sharpe_node(
            market.lambda1[k],
            market.lambda2[k],
            market.sigma1[k],
            market.sigma2[k],
            market.rho,
            theta,
            pi[k],
        );
        l1.push(a);
        l2.push(b);
    }
    Ok(ModifiedSharpePath {
        manager,
        setting: Setting::Diversification,
        l1,
        l2,
    })
}

/// The quadratic form `C(pi) = sigma1^2 pi1^2 + 2 rho sigma1 sigma2 pi1 pi2
/// + sigma2^2 pi2^2`, nonnegative for `|rho| <= 1`.
pub fn competition_quadratic(
    sigma1: &[f64],
    sigma2: &[f64],
    rho: f64,
    strategy: &StrategyPath,
) -> Result<Vec<f64>> {
    let pi = strategy.pair()?;
    strategy.validate_finite()?;
    if sigma1.len() != pi.len() || sigma2.len() != pi.len() {
        return Err(Error::LengthMismatch {
            expected: pi.len(),
            got: sigma1.len(),
        });
    }
    Ok((0..pi.len())
        .map(|k| {
            let a = sigma1[k] * pi[k][0];
            let b = sigma2[k] * pi[k][1];
            a * a + 2.0 * rho * a * b + b * b
        })
        .collect())
}

/// Evolves the specialization relative wealth of `manager` under own scalar
/// strategy and the competitor's scalar strategy. For manager 1 the dynamics
/// carry `(lambda~_{1,1}, lambda~_{1,2})`; manager 2 is symmetric.
pub fn evolve_relative_spec(
    market: &MarketPath,
    alpha: &StrategyPath,
    beta: &StrategyPath,
    params: &CompetitionParams,
    x0: f64,
    manager: Manager,
) -> Result<RelativeWealthPath> {
    check_x0(x0)?;
    check_len(market, alpha)?;
    check_len(market, beta)?;
    let a = alpha.scalar()?;
    let b = beta.scalar()?;
    let theta = params.theta(manager);
    let sharpe = match manager {
        Manager::One => modified_sharpe_spec(market, beta, theta, manager)?,
        Manager::Two => modified_sharpe_spec(market, alpha, theta, manager)?,
    };
    let n = market.len();
    let rho = market.rho;
    let mut values = Vec::with_capacity(n);
    values.push(x0);
    for k in 0..n - 1 {
        // own-asset exposure enters with +, the theta-scaled competitor leg with -
        let (own, cross, l_own, l_cross, dw_own, dw_cross) = match manager {
            Manager::One => (
                market.sigma1[k] * a[k],
                market.sigma2[k] * theta * b[k],
                sharpe.l1[k],
                sharpe.l2[k],
                market.dw(k).0,
                market.dw(k).1,
            ),
            Manager::Two => (
                market.sigma2[k] * b[k],
                market.sigma1[k] * theta * a[k],
                sharpe.l2[k],
                sharpe.l1[k],
                market.dw(k).1,
                market.dw(k).0,
            ),
        };
        let qv = own * own - 2.0 * rho * own * cross + cross * cross;
        let dt = market.grid.dt(k);
        let inc = (own * l_own - cross * l_cross - 0.5 * qv) * dt + own * dw_own - cross * dw_cross;
        values.push(values[k] * inc.exp());
    }
    Ok(RelativeWealthPath {
        values,
        manager,
        theta,
    })
}

/// Evolves the diversification relative wealth of `manager`, including the
/// `1/2 theta (1 + theta) C(competitor)` drift correction.
pub fn evolve_relative_div(
    market: &MarketPath,
    alpha: &StrategyPath,
    beta: &StrategyPath,
    params: &CompetitionParams,
    x0: f64,
    manager: Manager,
) -> Result<RelativeWealthPath> {
    check_x0(x0)?;
    check_len(market, alpha)?;
    check_len(market, beta)?;
    let (own, other) = match manager {
        Manager::One => (alpha.pair()?, beta.pair()?),
        Manager::Two => (beta.pair()?, alpha.pair()?),
    };
    let theta = params.theta(manager);
    let competitor = match manager {
        Manager::One => beta,
        Manager::Two => alpha,
    };
    let sharpe = modified_sharpe_div(market, competitor, theta, manager)?;
    let c_other = competition_quadratic(&market.sigma1, &market.sigma2, market.rho, competitor)?;
    let n = market.len();
    let rho = market.rho;
    let mut values = Vec::with_capacity(n);
    values.push(x0);
    for k in 0..n - 1 {
        let (s1, s2) = (market.sigma1[k], market.sigma2[k]);
        let (dw1, dw2) = market.dw(k);
        let e1 = s1 * (own[k][0] - theta * other[k][0]);
        let e2 = s2 * (own[k][1] - theta * other[k][1]);
        let qv = e1 * e1 + 2.0 * rho * e1 * e2 + e2 * e2;
        let drift = s1 * own[k][0] * sharpe.l1[k] + s2 * own[k][1] * sharpe.l2[k]
            - theta * (s1 * other[k][0] * market.lambda1[k] + s2 * other[k][1] * market.lambda2[k])
            + 0.5 * theta * (1.0 + theta) * c_other[k]
            - 0.5 * qv;
        let inc = drift * market.grid.dt(k) + e1 * dw1 + e2 * dw2;
        values.push(values[k] * inc.exp());
    }
    Ok(RelativeWealthPath {
        values,
        manager,
        theta,
    })
}

/// Per-step increments of the random-endowment return process `Y` induced by
/// the competitor's position, with `Y_0 = 0`. In the specialization setting
/// the endowment is driven only by the competitor's asset; in the
/// diversification setting it additionally carries the
/// `1/2 theta (1 + theta) C` drift.
pub fn endowment_increment(
    market: &MarketPath,
    competitor: &StrategyPath,
    theta: f64,
    manager: Manager,
    setting: Setting,
) -> Result<Vec<f64>> {
    check_len(market, competitor)?;
    let n = market.grid.steps();
    let mut out = Vec::with_capacity(n);
    match setting {
        Setting::Specialization => {
            let pi = competitor.scalar()?;
            let sharpe = modified_sharpe_spec(market, competitor, theta, manager)?;
            for k in 0..n {
                let dt = market.grid.dt(k);
                let (dw1, dw2) = market.dw(k);
                let dy = match manager {
                    Manager::One => {
                        let c = market.sigma2[k] * theta * pi[k];
                        -c * (sharpe.l2[k] * dt + dw2)
                    }
                    Manager::Two => {
                        let c = market.sigma1[k] * theta * pi[k];
                        -c * (sharpe.l1[k] * dt + dw1)
                    }
                };
                out.push(dy);
            }
        }
        Setting::Diversification => {
            let pi = competitor.pair()?;
            let c_path =
                competition_quadratic(&market.sigma1, &market.sigma2, market.rho, competitor)?;
            for k in 0..n {
                let dt = market.grid.dt(k);
                let (dw1, dw2) = market.dw(k);
                let dy = -theta
                    * (market.sigma1[k] * pi[k][0] * (market.lambda1[k] * dt + dw1)
                        + market.sigma2[k] * pi[k][1] * (market.lambda2[k] * dt + dw2))
                    + 0.5 * theta * (1.0 + theta) * c_path[k] * dt;
                out.push(dy);
            }
        }
    }
    Ok(out)
}

/// Rebuilds the relative wealth from the endowment decomposition: own
/// pseudo-asset exposure plus `dY`. Node-by-node this agrees with the direct
/// evolution up to floating-point regrouping; the two are the same
/// decomposition written against different legs.
pub fn evolve_relative_via_endowment(
    market: &MarketPath,
    own: &StrategyPath,
    competitor: &StrategyPath,
    params: &CompetitionParams,
    x0: f64,
    manager: Manager,
    setting: Setting,
) -> Result<RelativeWealthPath> {
    check_x0(x0)?;
    check_len(market, own)?;
    let theta = params.theta(manager);
    let sharpe = match setting {
        Setting::Specialization => modified_sharpe_spec(market, competitor, theta, manager)?,
        Setting::Diversification => modified_sharpe_div(market, competitor, theta, manager)?,
    };
    let dy = endowment_increment(market, competitor, theta, manager, setting)?;
    let n = market.len();
    let rho = market.rho;
    let mut values = Vec::with_capacity(n);
    values.push(x0);
    for k in 0..n - 1 {
        let dt = market.grid.dt(k);
        let (dw1, dw2) = market.dw(k);
        let (own_drift, own_shock, qv) = match setting {
            Setting::Specialization => {
                let pi = own.scalar()?;
                let (expo, l_own, dw_own, cross) = match manager {
                    Manager::One => (
                        market.sigma1[k] * pi[k],
                        sharpe.l1[k],
                        dw1,
                        market.sigma2[k] * theta * competitor.scalar()?[k],
                    ),
                    Manager::Two => (
                        market.sigma2[k] * pi[k],
                        sharpe.l2[k],
                        dw2,
                        market.sigma1[k] * theta * competitor.scalar()?[k],
                    ),
                };
                let qv = expo * expo - 2.0 * rho * expo * cross + cross * cross;
                (expo * l_own * dt, expo * dw_own, qv)
            }
            Setting::Diversification => {
                let pi = own.pair()?;
                let psi = competitor.pair()?;
                let (s1, s2) = (market.sigma1[k], market.sigma2[k]);
                let e1 = s1 * (pi[k][0] - theta * psi[k][0]);
                let e2 = s2 * (pi[k][1] - theta * psi[k][1]);
                let qv = e1 * e1 + 2.0 * rho * e1 * e2 + e2 * e2;
                (
                    (s1 * pi[k][0] * sharpe.l1[k] + s2 * pi[k][1] * sharpe.l2[k]) * dt,
                    s1 * pi[k][0] * dw1 + s2 * pi[k][1] * dw2,
                    qv,
                )
            }
        };
        let inc = own_drift + own_shock + dy[k] - 0.5 * qv * dt;
        values.push(values[k] * inc.exp());
    }
    Ok(RelativeWealthPath {
        values,
        manager,
        theta,
    })
}

/// Realizes the two pseudo-stock prices of one manager's fictitious market,
/// `dS~_i / S~_i = sigma_i (lambda~ dt + dW_i)`, started at 1. Diagnostic.
pub fn pseudo_stock_paths(
    market: &MarketPath,
    competitor: &StrategyPath,
    theta: f64,
    manager: Manager,
    setting: Setting,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let sharpe = match setting {
        Setting::Specialization => modified_sharpe_spec(market, competitor, theta, manager)?,
        Setting::Diversification => modified_sharpe_div(market, competitor, theta, manager)?,
    };
    let n = market.len();
    let mut s1 = Vec::with_capacity(n);
    let mut s2 = Vec::with_capacity(n);
    s1.push(1.0);
    s2.push(1.0);
    for k in 0..n - 1 {
        let dt = market.grid.dt(k);
        let (dw1, dw2) = market.dw(k);
        let (v1, v2) = (market.sigma1[k], market.sigma2[k]);
        let inc1 = (v1 * sharpe.l1[k] - 0.5 * v1 * v1) * dt + v1 * dw1;
        let inc2 = (v2 * sharpe.l2[k] - 0.5 * v2 * v2) * dt + v2 * dw2;
        s1.push(s1[k] * inc1.exp());
        s2.push(s2[k] * inc2.exp());
    }
    Ok((s1, s2))
}
