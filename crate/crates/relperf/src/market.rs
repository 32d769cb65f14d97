//! Correlated Brownian drivers and adapted market coefficient paths.
//!
//! The market holds one riskless account and two risky assets with
//! `dS_i/S_i = mu_i dt + sigma_i dW_i`, where `(W_1, W_2)` are standard
//! Brownian motions with instantaneous correlation `rho`. All wealth
//! quantities downstream are expressed in units discounted by the riskless
//! account, so the rate enters only through the Sharpe ratios
//! `lambda_i = (mu_i - r) / sigma_i`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default guard band keeping `|rho|` away from 1.
pub const DEFAULT_CORRELATION_EPS: f64 = 1e-6;

/// Strictly increasing time points starting at 0 (years).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// Builds a grid from explicit time points, validating shape.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                times.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidGrid(format!(
                "first time must be 0, got {}",
                times[0]
            )));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "times must be strictly increasing and finite near t = {}",
                    w[0]
                )));
            }
        }
        Ok(Self { times })
    }

    /// Uniform grid with `steps` intervals on `[0, horizon]`.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || steps == 0 {
            return Err(Error::InvalidGrid(format!(
                "horizon {horizon} and steps {steps} must be positive"
            )));
        }
        let n = steps as f64;
        let times = (0..=steps).map(|k| horizon * k as f64 / n).collect();
        Self::from_times(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of nodes (intervals + 1).
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of intervals.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn t(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// The common step when the grid is uniform (within rounding).
    pub fn step(&self) -> Option<f64> {
        let dt0 = self.dt(0);
        let uniform = (0..self.steps()).all(|k| (self.dt(k) - dt0).abs() <= 1e-12 * dt0.abs());
        uniform.then_some(dt0)
    }

    /// Keeps every `factor`-th node; `steps()` must be divisible by `factor`.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps() % factor != 0 {
            return Err(Error::InvalidGrid(format!(
                "cannot coarsen {} intervals by factor {factor}",
                self.steps()
            )));
        }
        Self::from_times(self.times.iter().copied().step_by(factor).collect())
    }
}

/// Instantaneous correlation of the two Brownian drivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSpec {
    pub rho: f64,
    /// Guard band: `|rho| <= 1 - eps` is required.
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    DEFAULT_CORRELATION_EPS
}

impl CorrelationSpec {
    pub fn new(rho: f64) -> Result<Self> {
        Self::with_eps(rho, DEFAULT_CORRELATION_EPS)
    }

    pub fn with_eps(rho: f64, eps: f64) -> Result<Self> {
        let spec = Self { rho, eps };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rho.is_finite() || self.rho.abs() > 1.0 - self.eps {
            return Err(Error::InvalidCorrelation {
                rho: self.rho,
                eps: self.eps,
            });
        }
        Ok(())
    }
}

/// Reproducible seed; path `i` always draws from ChaCha stream `i` of `seed`,
/// so an ensemble is bit-identical for any parallelism degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
}

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Dedicated RNG stream for one path index.
    pub fn stream(&self, path_index: u64) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(path_index);
        rng
    }
}

/// One sampled pair of correlated Brownian paths on a grid (node values).
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPair {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
}

impl BrownianPair {
    /// Keeps every `factor`-th node; restriction of the same Brownian path
    /// to a coarser grid.
    pub fn coarsen(&self, factor: usize) -> BrownianPair {
        BrownianPair {
            w1: self.w1.iter().copied().step_by(factor).collect(),
            w2: self.w2.iter().copied().step_by(factor).collect(),
        }
    }
}

/// Samples one `(W_1, W_2)` pair for the given path index.
///
/// `W_2` is assembled as `rho W_1 + sqrt(1 - rho^2) W_1_perp` so increments
/// over `[t_k, t_{k+1}]` are centered Gaussian with variance `dt_k` and
/// cross-correlation `rho`.
pub fn sample_brownian_single(
    grid: &TimeGrid,
    corr: &CorrelationSpec,
    seed: RngSeed,
    path_index: u64,
) -> Result<BrownianPair> {
    corr.validate()?;
    let mut rng = seed.stream(path_index);
    let n = grid.len();
    let rho = corr.rho;
    let orth = (1.0 - rho * rho).sqrt();
    let mut w1 = Vec::with_capacity(n);
    let mut w2 = Vec::with_capacity(n);
    w1.push(0.0);
    w2.push(0.0);
    for k in 0..grid.steps() {
        let sdt = grid.dt(k).sqrt();
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        w1.push(w1[k] + sdt * z1);
        w2.push(w2[k] + sdt * (rho * z1 + orth * z2));
    }
    Ok(BrownianPair { w1, w2 })
}

/// Samples an ensemble of Brownian pairs, parallel across path indices.
pub fn sample_brownian(
    grid: &TimeGrid,
    corr: &CorrelationSpec,
    seed: RngSeed,
    n_paths: usize,
) -> Result<Vec<BrownianPair>> {
    corr.validate()?;
    if n_paths == 0 {
        return Err(Error::DegenerateEnsemble(0));
    }
    (0..n_paths)
        .into_par_iter()
        .map(|i| sample_brownian_single(grid, corr, seed, i as u64))
        .collect()
}

/// Which Brownian driver a state-dependent coefficient reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Driver {
    W1,
    W2,
}

/// A computable adapted coefficient family: constants, deterministic
/// functions of time, or Markovian functionals of `(t, W_1, W_2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoeffFn {
    Constant {
        value: f64,
    },
    /// `base + slope * t`.
    TimeAffine {
        base: f64,
        slope: f64,
    },
    /// `base + amplitude * tanh(scale * W_d(t))`; bounded by construction.
    TanhOfDriver {
        base: f64,
        amplitude: f64,
        scale: f64,
        driver: Driver,
    },
}

impl CoeffFn {
    pub fn constant(value: f64) -> Self {
        CoeffFn::Constant { value }
    }

    pub fn eval(&self, t: f64, w1: f64, w2: f64) -> f64 {
        match *self {
            CoeffFn::Constant { value } => value,
            CoeffFn::TimeAffine { base, slope } => base + slope * t,
            CoeffFn::TanhOfDriver {
                base,
                amplitude,
                scale,
                driver,
            } => {
                let w = match driver {
                    Driver::W1 => w1,
                    Driver::W2 => w2,
                };
                base + amplitude * (scale * w).tanh()
            }
        }
    }
}

/// Coefficient processes for both assets plus the admissibility band for the
/// realized Sharpe ratios. Paths whose `lambda_i` leave `[lambda_min,
/// lambda_max]` are rejected rather than clipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientModel {
    pub mu1: CoeffFn,
    pub mu2: CoeffFn,
    pub sigma1: CoeffFn,
    pub sigma2: CoeffFn,
    pub rate: CoeffFn,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl CoefficientModel {
    /// Constant-coefficient model, the workhorse for tests and defaults.
    pub fn constant(mu: [f64; 2], sigma: [f64; 2], rate: f64) -> Self {
        Self {
            mu1: CoeffFn::constant(mu[0]),
            mu2: CoeffFn::constant(mu[1]),
            sigma1: CoeffFn::constant(sigma[0]),
            sigma2: CoeffFn::constant(sigma[1]),
            rate: CoeffFn::constant(rate),
            lambda_min: 1e-8,
            lambda_max: 100.0,
        }
    }

    pub fn with_lambda_bounds(mut self, min: f64, max: f64) -> Self {
        self.lambda_min = min;
        self.lambda_max = max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_min > 0.0 && self.lambda_min <= self.lambda_max) {
            return Err(Error::InvalidModel(format!(
                "need 0 < lambda_min <= lambda_max, got [{}, {}]",
                self.lambda_min, self.lambda_max
            )));
        }
        Ok(())
    }
}

/// A realized market path: Brownian drivers plus nodewise coefficient and
/// Sharpe-ratio paths. `lambda_i = (mu_i - r) / sigma_i` holds at every node.
#[derive(Debug, Clone)]
pub struct MarketPath {
    pub grid: TimeGrid,
    pub rho: f64,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub sigma1: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub rate: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
}

impl MarketPath {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Brownian increments over `[t_k, t_{k+1}]`.
    pub fn dw(&self, k: usize) -> (f64, f64) {
        (self.w1[k + 1] - self.w1[k], self.w2[k + 1] - self.w2[k])
    }
}

/// Realizes coefficient and Sharpe-ratio paths along a sampled Brownian pair.
///
/// Coefficients at `t_k` depend only on the path up to `t_k`, so adaptedness
/// is preserved by construction.
pub fn realize_market(
    model: &CoefficientModel,
    brownian: &BrownianPair,
    grid: &TimeGrid,
    corr: &CorrelationSpec,
) -> Result<MarketPath> {
    model.validate()?;
    corr.validate()?;
    let n = grid.len();
    if brownian.w1.len() != n || brownian.w2.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: brownian.w1.len(),
        });
    }
    let mut mu1 = Vec::with_capacity(n);
    let mut mu2 = Vec::with_capacity(n);
    let mut sigma1 = Vec::with_capacity(n);
    let mut sigma2 = Vec::with_capacity(n);
    let mut rate = Vec::with_capacity(n);
    let mut lambda1 = Vec::with_capacity(n);
    let mut lambda2 = Vec::with_capacity(n);
    for k in 0..n {
        let (t, w1, w2) = (grid.t(k), brownian.w1[k], brownian.w2[k]);
        let m1 = model.mu1.eval(t, w1, w2);
        let m2 = model.mu2.eval(t, w1, w2);
        let s1 = model.sigma1.eval(t, w1, w2);
        let s2 = model.sigma2.eval(t, w1, w2);
        let r = model.rate.eval(t, w1, w2);
        for (asset, s) in [(1u8, s1), (2u8, s2)] {
            if !(s > 0.0) {
                return Err(Error::NonPositiveSigma {
                    asset,
                    node: k,
                    t,
                    value: s,
                });
            }
        }
        if !(r >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "negative rate {r} at node {k} (t = {t})"
            )));
        }
        let l1 = (m1 - r) / s1;
        let l2 = (m2 - r) / s2;
        for (asset, l) in [(1u8, l1), (2u8, l2)] {
            if !(l >= model.lambda_min && l <= model.lambda_max) {
                return Err(Error::SharpeOutOfBounds {
                    asset,
                    node: k,
                    t,
                    value: l,
                    min: model.lambda_min,
                    max: model.lambda_max,
                });
            }
        }
        mu1.push(m1);
        mu2.push(m2);
        sigma1.push(s1);
        sigma2.push(s2);
        rate.push(r);
        lambda1.push(l1);
        lambda2.push(l2);
    }
    Ok(MarketPath {
        grid: grid.clone(),
        rho: corr.rho,
        w1: brownian.w1.clone(),
        w2: brownian.w2.clone(),
        mu1,
        mu2,
        sigma1,
        sigma2,
        rate,
        lambda1,
        lambda2,
    })
}
