use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by simulation, closed-form and verification routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("correlation {rho} violates |rho| <= 1 - {eps}")]
    InvalidCorrelation { rho: f64, eps: f64 },

    #[error("|rho| = 1 makes the system singular for this operation")]
    DegenerateCorrelation,

    #[error("invalid coefficient model: {0}")]
    InvalidModel(String),

    #[error("sigma{asset} must be positive at node {node} (t = {t}): got {value}")]
    NonPositiveSigma {
        asset: u8,
        node: usize,
        t: f64,
        value: f64,
    },

    #[error("lambda{asset} = {value} at node {node} (t = {t}) outside the admissible band [{min}, {max}]")]
    SharpeOutOfBounds {
        asset: u8,
        node: usize,
        t: f64,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("strategy value must be finite at node {node}")]
    NonFiniteStrategy { node: usize },

    #[error("expected a {expected} strategy path")]
    StrategyShape { expected: &'static str },

    #[error("path length {got} does not match grid length {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("competition parameter theta must lie in (0, 1], got {0}")]
    InvalidTheta(f64),

    #[error("initial wealth must be positive, got {0}")]
    NonPositiveWealth(f64),

    #[error("measure atoms must be finitely many with y > 0 and w > 0: {0}")]
    InvalidMeasure(String),

    #[error("argument must be positive, got {0}")]
    NonPositiveArgument(f64),

    #[error("risk aversion gamma must be positive and != 1, got {0}")]
    InvalidGamma(f64),

    #[error("no equilibrium: determinant {0} is too close to zero")]
    NoEquilibrium(f64),

    #[error("ensemble of {0} paths is too small for this statistic")]
    DegenerateEnsemble(usize),

    #[error("root search failed to converge: {0}")]
    NonConvergence(String),
}
