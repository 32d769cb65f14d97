//! Two fund managers trade under relative performance concerns in an
//! Ito-diffusion market with two risky assets. This crate simulates the
//! relative-wealth dynamics in both the asset-specialization setting (each
//! manager trades only her own asset) and the asset-diversification setting
//! (both trade both assets), evaluates the closed-form best-response and
//! Nash-equilibrium strategies for CRRA/log preferences, houses the
//! measure/heat-function machinery behind general locally riskless forward
//! criteria, and certifies the defining (super)martingale, PDE-residual and
//! fixed-point properties by Monte Carlo.
//!
//! Modules map onto the pipeline:
//! - [`market`]: correlated Brownian drivers and adapted coefficient paths;
//! - [`wealth`]: wealth / relative-wealth evolutions and modified Sharpe ratios;
//! - [`criteria`]: atomic measures, heat function `h`, utility `u`, the
//!   stochastic clock `A`, shift `M`, discount `B` and process `H`;
//! - [`strategies`]: closed-form best responses and Nash equilibria;
//! - [`verify`]: martingale tests, residual checks and convergence studies.

pub mod criteria;
mod error;
pub mod market;
pub mod strategies;
pub mod verify;
pub mod wealth;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// Which of the two trading settings a path or strategy lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// Each manager trades only her own risky asset.
    Specialization,
    /// Both managers trade both risky assets.
    Diversification,
}

/// Manager index. Manager one specializes in asset 1, manager two in asset 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manager {
    One,
    Two,
}

impl Manager {
    /// The opponent of this manager.
    pub fn other(self) -> Manager {
        match self {
            Manager::One => Manager::Two,
            Manager::Two => Manager::One,
        }
    }
}

/// Competition biases `theta_i` in `(0, 1]`; `theta = 1` is pure benchmarking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompetitionParams {
    pub theta1: f64,
    pub theta2: f64,
}

impl CompetitionParams {
    pub fn new(theta1: f64, theta2: f64) -> Result<Self> {
        for theta in [theta1, theta2] {
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(Error::InvalidTheta(theta));
            }
        }
        Ok(Self { theta1, theta2 })
    }

    /// Bias of the given manager.
    pub fn theta(&self, manager: Manager) -> f64 {
        match manager {
            Manager::One => self.theta1,
            Manager::Two => self.theta2,
        }
    }
}
