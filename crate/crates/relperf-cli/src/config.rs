//! Run configuration: one JSON document describing the market, the
//! competition, the preferences and the simulation budget.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use relperf::criteria::Atom;
use relperf::market::{CoeffFn, CoefficientModel, CorrelationSpec, RngSeed, TimeGrid};
use relperf::wealth::StrategySpec;
use relperf::{CompetitionParams, Setting};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Horizon in years.
    pub horizon: f64,
    /// Uniform step.
    pub dt: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<TimeGrid> {
        let steps = (self.horizon / self.dt).round() as usize;
        Ok(TimeGrid::uniform(self.horizon, steps.max(1))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    pub rho: f64,
    pub mu1: CoeffFn,
    pub mu2: CoeffFn,
    pub sigma1: CoeffFn,
    pub sigma2: CoeffFn,
    pub rate: CoeffFn,
    #[serde(default = "default_lambda_min")]
    pub lambda_min: f64,
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
}

fn default_lambda_min() -> f64 {
    1e-8
}

fn default_lambda_max() -> f64 {
    100.0
}

impl MarketSpec {
    pub fn correlation(&self) -> Result<CorrelationSpec> {
        Ok(CorrelationSpec::new(self.rho)?)
    }

    pub fn model(&self) -> CoefficientModel {
        CoefficientModel {
            mu1: self.mu1.clone(),
            mu2: self.mu2.clone(),
            sigma1: self.sigma1.clone(),
            sigma2: self.sigma2.clone(),
            rate: self.rate.clone(),
            lambda_min: self.lambda_min,
            lambda_max: self.lambda_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitionSpec {
    pub theta1: f64,
    pub theta2: f64,
}

impl CompetitionSpec {
    pub fn params(&self) -> Result<CompetitionParams> {
        Ok(CompetitionParams::new(self.theta1, self.theta2)?)
    }
}

/// Manager 1's criterion; `gamma2` describes the opponent where a Nash
/// solve needs it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PreferenceSpec {
    Crra {
        gamma1: f64,
        gamma2: f64,
    },
    Log,
    /// Atomic measure generating manager 1's criterion (diversification
    /// machinery); the opponent stays CRRA for equilibrium solves.
    Measure {
        atoms: Vec<Atom>,
        gamma2: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSpec {
    pub x1: f64,
    pub x2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub setting: Setting,
    pub grid: GridSpec,
    pub market: MarketSpec,
    pub competition: CompetitionSpec,
    pub preferences: PreferenceSpec,
    /// The passive opponent's revealed strategy.
    pub opponent: StrategySpec,
    /// Manager 1's own strategy for plain simulation; defaults to the
    /// best response when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub own: Option<StrategySpec>,
    pub initial: InitialSpec,
    pub seed: u64,
    pub n_paths: usize,
    pub output_dir: String,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn seed(&self) -> RngSeed {
        RngSeed::new(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid.horizon > 0.0 && self.grid.dt > 0.0 && self.grid.dt <= self.grid.horizon) {
            bail!(
                "grid must satisfy 0 < dt <= horizon, got dt = {}, horizon = {}",
                self.grid.dt,
                self.grid.horizon
            );
        }
        self.market.correlation()?;
        self.market.model().validate()?;
        self.competition.params()?;
        if !(self.initial.x1 > 0.0 && self.initial.x2 > 0.0) {
            bail!("initial wealths must be positive");
        }
        if self.n_paths == 0 {
            bail!("n_paths must be at least 1");
        }
        let scalar_opponent = matches!(
            self.opponent,
            StrategySpec::ConstantScalar { .. }
                | StrategySpec::TimeAffineScalar { .. }
                | StrategySpec::TanhScalar { .. }
        );
        match self.setting {
            Setting::Specialization => {
                if !scalar_opponent {
                    bail!("the specialization setting needs a scalar opponent strategy");
                }
                if matches!(self.preferences, PreferenceSpec::Measure { .. }) {
                    bail!("measure-generated criteria are only available in the diversification setting");
                }
            }
            Setting::Diversification => {
                if scalar_opponent {
                    bail!("the diversification setting needs a two-asset opponent strategy");
                }
            }
        }
        match &self.preferences {
            PreferenceSpec::Crra { gamma1, gamma2 } => {
                for g in [*gamma1, *gamma2] {
                    if !(g > 0.0 && g != 1.0) {
                        bail!("CRRA gamma must be positive and != 1, got {g}");
                    }
                }
            }
            PreferenceSpec::Measure { atoms, gamma2 } => {
                relperf::criteria::AtomicMeasure::new(atoms.clone())?;
                if !(*gamma2 > 0.0 && *gamma2 != 1.0) {
                    bail!("opponent gamma must be positive and != 1, got {gamma2}");
                }
            }
            PreferenceSpec::Log => {}
        }
        Ok(())
    }

    /// Relative wealth of manager 1 at time zero: `x1 / x2^theta1`.
    pub fn x1_rel(&self) -> f64 {
        self.initial.x1 / self.initial.x2.powf(self.competition.theta1)
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_paths: Option<usize>,
    pub dt: Option<f64>,
}

impl RunConfig {
    pub fn with_overrides(mut self, o: &Overrides) -> Self {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(n) = o.n_paths {
            self.n_paths = n;
        }
        if let Some(dt) = o.dt {
            self.grid.dt = dt;
        }
        self
    }
}

/// The scenario used by `verify` and shipped as `configs/default.json`:
/// constant Sharpe ratios 0.3, volatilities 0.2, correlation 0.3.
pub fn default_config() -> RunConfig {
    RunConfig {
        setting: Setting::Specialization,
        grid: GridSpec {
            horizon: 1.0,
            dt: 1e-3,
        },
        market: MarketSpec {
            rho: 0.3,
            mu1: CoeffFn::constant(0.07),
            mu2: CoeffFn::constant(0.07),
            sigma1: CoeffFn::constant(0.2),
            sigma2: CoeffFn::constant(0.2),
            rate: CoeffFn::constant(0.01),
            lambda_min: default_lambda_min(),
            lambda_max: default_lambda_max(),
        },
        competition: CompetitionSpec {
            theta1: 0.5,
            theta2: 0.5,
        },
        preferences: PreferenceSpec::Crra {
            gamma1: 2.0,
            gamma2: 3.0,
        },
        opponent: StrategySpec::ConstantScalar { value: 0.8 },
        own: None,
        initial: InitialSpec { x1: 1.0, x2: 1.0 },
        seed: 42,
        n_paths: 100_000,
        output_dir: "runs/default".into(),
    }
}
