//! Machinery for locally riskless forward criteria in the diversification
//! setting: finite atomic measures, the space-time harmonic function `h`,
//! the generated utility `u`, relative risk tolerance, the stochastic clock
//! `A`, martingale shift `M`, discount `B`, measure tilting and the process
//! `H`, plus closed-form evaluation of the forward value and the optimal
//! relative wealth.
//!
//! With `nu = sum_k w_k delta_{y_k}` (all `y_k > 0`, `w_k > 0`) every
//! quantity is an exact finite sum:
//!
//! ```text
//! h(z, t)   = sum_k w_k exp(y_k z - y_k^2 t / 2),      h_t + h_zz / 2 = 0,
//! u_z(x, t) = exp(-h^{-1}(x, t) + t / 2),              u_t = u_z^2 / (2 u_zz),
//! R(x, t)   = h_z / h at h^{-1}(x, t)  =  -u_z / (x u_zz).
//! ```
//!
//! All atomic sums are factored by the maximal exponent before summation.

use serde::{Deserialize, Serialize};

use crate::market::{MarketPath, TimeGrid};
use crate::wealth::ModifiedSharpePath;
use crate::{Error, Manager, Result};

/// One atom `w * delta_y` of the measure generating the criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub y: f64,
    pub w: f64,
}

/// A finite positive measure supported on finitely many points of `(0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
}

impl AtomicMeasure {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        for a in &atoms {
            if !(a.y > 0.0 && a.y.is_finite() && a.w > 0.0 && a.w.is_finite()) {
                return Err(Error::InvalidMeasure(format!(
                    "atom (y = {}, w = {})",
                    a.y, a.w
                )));
            }
        }
        Ok(Self { atoms })
    }

    /// The Dirac measure `delta_{1/gamma}` generating the CRRA criterion.
    pub fn dirac_crra(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidGamma(gamma));
        }
        Self::new(vec![Atom {
            y: 1.0 / gamma,
            w: 1.0,
        }])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum()
    }
}

/// Value and derivatives of `h` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatDerivs {
    pub h: f64,
    pub h_z: f64,
    pub h_zz: f64,
    pub h_t: f64,
}

/// The positive, strictly increasing, strictly convex space-time harmonic
/// function generated by an atomic measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatFunction {
    measure: AtomicMeasure,
    #[serde(skip)]
    ln_w: Vec<f64>,
}

impl HeatFunction {
    pub fn new(measure: AtomicMeasure) -> Self {
        let ln_w = measure.atoms().iter().map(|a| a.w.ln()).collect();
        Self { measure, ln_w }
    }

    pub fn measure(&self) -> &AtomicMeasure {
        &self.measure
    }

    fn ln_weights(&self) -> Vec<f64> {
        // serde(skip) leaves ln_w empty after deserialization
        if self.ln_w.len() == self.measure.atoms().len() {
            self.ln_w.clone()
        } else {
            self.measure.atoms().iter().map(|a| a.w.ln()).collect()
        }
    }

    fn max_exponent(&self, z: f64, t: f64) -> f64 {
        let ln_w = self.ln_weights();
        self.measure
            .atoms()
            .iter()
            .zip(&ln_w)
            .map(|(a, lw)| lw + a.y * z - 0.5 * a.y * a.y * t)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Scaled sums `sum_k y_k^p exp(e_k - e_max)` for `p = 0, 1, 2`.
    fn scaled_sums(&self, z: f64, t: f64) -> (f64, f64, f64, f64) {
        let ln_w = self.ln_weights();
        let e_max = self.max_exponent(z, t);
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (a, lw) in self.measure.atoms().iter().zip(&ln_w) {
            let e = (lw + a.y * z - 0.5 * a.y * a.y * t - e_max).exp();
            s0 += e;
            s1 += a.y * e;
            s2 += a.y * a.y * e;
        }
        (e_max, s0, s1, s2)
    }

    /// `h(z, t)`, guarded against overflow by max-exponent factoring.
    pub fn eval(&self, z: f64, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        let (e_max, s0, _, _) = self.scaled_sums(z, t);
        e_max.exp() * s0
    }

    /// `ln h(z, t)`, always finite-range.
    pub fn log_eval(&self, z: f64, t: f64) -> f64 {
        let (e_max, s0, _, _) = self.scaled_sums(z, t);
        e_max + s0.ln()
    }

    /// Value plus the analytic derivatives `h_z`, `h_zz` and `h_t`; the time
    /// derivative is accumulated termwise as `-y_k^2/2` times each atom.
    pub fn eval_all(&self, z: f64, t: f64) -> HeatDerivs {
        let ln_w = self.ln_weights();
        let e_max = self.max_exponent(z, t);
        let scale = e_max.exp();
        let (mut h, mut h_z, mut h_zz, mut h_t) = (0.0, 0.0, 0.0, 0.0);
        for (a, lw) in self.measure.atoms().iter().zip(&ln_w) {
            let e = (lw + a.y * z - 0.5 * a.y * a.y * t - e_max).exp();
            h += e;
            h_z += a.y * e;
            h_zz += a.y * a.y * e;
            h_t += -0.5 * a.y * a.y * e;
        }
        HeatDerivs {
            h: scale * h,
            h_z: scale * h_z,
            h_zz: scale * h_zz,
            h_t: scale * h_t,
        }
    }

    /// The ratio `h_z / h`, a weight-normalized mean of the atom locations;
    /// stable at any magnitude of `z` or `t`.
    pub fn ratio_zh(&self, z: f64, t: f64) -> f64 {
        let (_, s0, s1, _) = self.scaled_sums(z, t);
        s1 / s0
    }

    /// Spatial inverse: the unique `z` with `h(z, t) = x`.
    ///
    /// Solves `ln h(z, t) = ln x` (the log is increasing and convex in `z`)
    /// by geometric bracket growth from `z = 0` followed by safeguarded
    /// Newton; relative tolerance in `x` is 1e-14.
    pub fn inverse(&self, x: f64, t: f64) -> Result<f64> {
        self.inverse_from(x, t, 0.0)
    }

    /// Same as [`HeatFunction::inverse`] with a caller-supplied initial
    /// guess, for warm starts along a path.
    pub fn inverse_from(&self, x: f64, t: f64, guess: f64) -> Result<f64> {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::NonPositiveArgument(x));
        }
        let target = x.ln();
        let g = |z: f64| self.log_eval(z, t) - target;

        // Bracket the root, growing geometrically from the guess.
        let mut lo = guess;
        let mut hi = guess;
        let g0 = g(guess);
        if g0 == 0.0 {
            return Ok(guess);
        }
        let mut step = 1.0;
        if g0 > 0.0 {
            // root lies to the left
            while g(lo) > 0.0 {
                hi = lo;
                lo -= step;
                step *= 2.0;
                if step > 1e18 {
                    return Err(Error::NonConvergence("h_inverse bracket".into()));
                }
            }
        } else {
            while g(hi) < 0.0 {
                lo = hi;
                hi += step;
                step *= 2.0;
                if step > 1e18 {
                    return Err(Error::NonConvergence("h_inverse bracket".into()));
                }
            }
        }

        let mut z = 0.5 * (lo + hi);
        for _ in 0..200 {
            let gz = g(z);
            if gz.abs() <= 1e-14 {
                return Ok(z);
            }
            if gz > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            let slope = self.ratio_zh(z, t);
            let mut next = z - gz / slope;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (hi - lo).abs() <= f64::EPSILON * (1.0 + z.abs()) {
                return Ok(z);
            }
            z = next;
        }
        Err(Error::NonConvergence(format!(
            "h_inverse at (x = {x}, t = {t})"
        )))
    }

    /// Relative risk tolerance `R(x, t) = h_z / h` composed with the spatial
    /// inverse; equals `-u_z / (x u_zz)` for the generated utility.
    pub fn risk_tolerance(&self, x: f64, t: f64) -> Result<f64> {
        let z = self.inverse(x, t)?;
        Ok(self.ratio_zh(z, t))
    }
}

/// The utility flow generated by a heat function: `u_z = exp(-h^{-1}(x,t) +
/// t/2)` with `u` recovered in closed form (exact for atomic measures) and
/// pinned by the anchor value `u(1, 0)`.
///
/// For a Dirac measure the anchor defaults to the CRRA value
/// `w^gamma / (1 - gamma)`; for other measures it defaults to 0. The level
/// never enters strategies or martingale statistics.
#[derive(Debug, Clone)]
pub struct ForwardUtility {
    h: HeatFunction,
    offset: f64,
}

impl ForwardUtility {
    pub fn new(h: HeatFunction) -> Result<Self> {
        let atoms = h.measure().atoms();
        let offset = if atoms.len() == 1 && atoms[0].y != 1.0 {
            0.0 // raw closed form already equals the CRRA normalization
        } else {
            let raw = Self::raw_value(&h, 1.0, 0.0)?;
            -raw
        };
        Ok(Self { h, offset })
    }

    pub fn with_anchor(h: HeatFunction, anchor: f64) -> Result<Self> {
        let raw = Self::raw_value(&h, 1.0, 0.0)?;
        Ok(Self {
            h,
            offset: anchor - raw,
        })
    }

    pub fn heat(&self) -> &HeatFunction {
        &self.h
    }

    /// Closed-form antiderivative of `u_z` evaluated at `(x, t)`:
    ///
    /// ```text
    /// sum_{y_k != 1} (y_k / (y_k - 1)) w_k exp((y_k - 1) z* + t/2 - y_k^2 t/2)
    ///   + sum_{y_k = 1} w_k (z* - t),        z* = h^{-1}(x, t).
    /// ```
    fn raw_value(h: &HeatFunction, x: f64, t: f64) -> Result<f64> {
        let z = h.inverse(x, t)?;
        let ln_w = h.ln_weights();
        let mut e_max = f64::NEG_INFINITY;
        for (a, lw) in h.measure().atoms().iter().zip(&ln_w) {
            if a.y != 1.0 {
                let e = lw + (a.y - 1.0) * z + 0.5 * t - 0.5 * a.y * a.y * t;
                e_max = e_max.max(e);
            }
        }
        let mut value = 0.0;
        if e_max > f64::NEG_INFINITY {
            let scale = e_max.exp();
            for (a, lw) in h.measure().atoms().iter().zip(&ln_w) {
                if a.y != 1.0 {
                    let e = lw + (a.y - 1.0) * z + 0.5 * t - 0.5 * a.y * a.y * t;
                    value += a.y / (a.y - 1.0) * (e - e_max).exp();
                }
            }
            value *= scale;
        }
        for a in h.measure().atoms() {
            if a.y == 1.0 {
                value += a.w * (z - t);
            }
        }
        Ok(value)
    }

    /// `u(x, t)`, strictly increasing and strictly concave in `x`.
    pub fn u(&self, x: f64, t: f64) -> Result<f64> {
        Ok(Self::raw_value(&self.h, x, t)? + self.offset)
    }

    /// `u_z(x, t) = exp(-h^{-1}(x, t) + t/2) > 0`.
    pub fn u_z(&self, x: f64, t: f64) -> Result<f64> {
        let z = self.h.inverse(x, t)?;
        Ok((0.5 * t - z).exp())
    }

    /// `u_zz(x, t) = -u_z / (x R(x, t)) < 0`.
    pub fn u_zz(&self, x: f64, t: f64) -> Result<f64> {
        let z = self.h.inverse(x, t)?;
        let u_z = (0.5 * t - z).exp();
        Ok(-u_z / (x * self.h.ratio_zh(z, t)))
    }

    /// Analytic time derivative `u_t = -u_z h_z(h^{-1}(x,t), t) / 2`,
    /// equivalently `u_z^2 / (2 u_zz)`.
    pub fn u_t(&self, x: f64, t: f64) -> Result<f64> {
        let z = self.h.inverse(x, t)?;
        let u_z = (0.5 * t - z).exp();
        Ok(-0.5 * u_z * x * self.h.ratio_zh(z, t))
    }

    /// Relative risk tolerance `-u_z / (x u_zz)`.
    pub fn risk_tolerance(&self, x: f64, t: f64) -> Result<f64> {
        self.h.risk_tolerance(x, t)
    }
}

/// The stochastic clock `A`: running quadrature of the positive-definite
/// Sharpe quadratic form of the personalized market.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChangePath {
    /// `A` at each node; starts at 0, nondecreasing.
    pub values: Vec<f64>,
    /// Nodewise integrand `(l1^2 - 2 rho l1 l2 + l2^2) / (1 - rho^2) >= 0`.
    pub integrand: Vec<f64>,
}

/// The martingale shift `M`: Ito sums of the personalized market price of
/// risk against the Brownian drivers, with `M_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingalePartPath {
    pub values: Vec<f64>,
}

/// The discount process `B = exp(theta (1 - theta)/2 * int C ds) >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountPath {
    pub values: Vec<f64>,
    pub theta: f64,
}

/// Computes the clock `A` and shift `M` from a modified Sharpe path by
/// left-endpoint quadrature and Ito sums.
///
/// In orthonormalized driver coordinates the market price of risk of the
/// two-asset fictitious market is `(l1, (l2 - rho l1)/sqrt(1-rho^2))`, so
///
/// ```text
/// dA = (l1^2 - 2 rho l1 l2 + l2^2) / (1 - rho^2) dt,
/// dM = ((l1 - rho l2) dW_1 + (l2 - rho l1) dW_2) / (1 - rho^2),
/// ```
///
/// which makes `d<M> = dA` hold for correlated drivers and reduces to
/// `l1 dW_1 + l2 dW_2` when `rho = 0`.
pub fn compute_a_m(
    sharpe: &ModifiedSharpePath,
    market: &MarketPath,
) -> Result<(TimeChangePath, MartingalePartPath)> {
    let rho = market.rho;
    if rho.abs() >= 1.0 {
        return Err(Error::DegenerateCorrelation);
    }
    let n = market.len();
    if sharpe.l1.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: sharpe.l1.len(),
        });
    }
    let one_minus = 1.0 - rho * rho;
    let integrand: Vec<f64> = (0..n)
        .map(|k| {
            let (a, b) = (sharpe.l1[k], sharpe.l2[k]);
            (a * a - 2.0 * rho * a * b + b * b) / one_minus
        })
        .collect();
    let mut a_values = Vec::with_capacity(n);
    let mut m_values = Vec::with_capacity(n);
    a_values.push(0.0);
    m_values.push(0.0);
    for k in 0..n - 1 {
        let dt = market.grid.dt(k);
        let (dw1, dw2) = market.dw(k);
        let (l1, l2) = (sharpe.l1[k], sharpe.l2[k]);
        a_values.push(a_values[k] + integrand[k] * dt);
        let dm = ((l1 - rho * l2) * dw1 + (l2 - rho * l1) * dw2) / one_minus;
        m_values.push(m_values[k] + dm);
    }
    Ok((
        TimeChangePath {
            values: a_values,
            integrand,
        },
        MartingalePartPath { values: m_values },
    ))
}

/// Discount process from a competition-quadratic path by left-endpoint
/// quadrature. `theta` in `(0, 1]`; `B` is identically 1 at `theta = 1`.
pub fn compute_b(theta: f64, c_path: &[f64], grid: &TimeGrid) -> Result<DiscountPath> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidTheta(theta));
    }
    if c_path.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: c_path.len(),
        });
    }
    let half_tt = 0.5 * theta * (1.0 - theta);
    let mut values = Vec::with_capacity(grid.len());
    let mut integral = 0.0;
    values.push(1.0);
    for k in 0..grid.steps() {
        integral += c_path[k] * grid.dt(k);
        values.push((half_tt * integral).exp());
    }
    Ok(DiscountPath { values, theta })
}

/// The measure re-weighted by the market state: atom `y` picks up the factor
/// `exp(y (1 - y/2) A + y M)`. Stored in log form to dodge overflow.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedMeasure {
    pub base: AtomicMeasure,
    pub a: f64,
    pub m: f64,
    /// `ln w_k + y_k (1 - y_k/2) a + y_k m` per atom.
    pub log_weights: Vec<f64>,
}

impl TiltedMeasure {
    /// Effective weight of atom `k` (may overflow for extreme tilts; ratio
    /// quantities below stay finite).
    pub fn weight(&self, k: usize) -> f64 {
        self.log_weights[k].exp()
    }

    /// The ratio `sum y e^{y z0} dnu~ / sum e^{y z0} dnu~` evaluated stably.
    pub fn moment_ratio(&self, z0: f64) -> f64 {
        let e_max = self
            .base
            .atoms()
            .iter()
            .zip(&self.log_weights)
            .map(|(a, lw)| lw + a.y * z0)
            .fold(f64::NEG_INFINITY, f64::max);
        let (mut s0, mut s1) = (0.0, 0.0);
        for (a, lw) in self.base.atoms().iter().zip(&self.log_weights) {
            let e = (lw + a.y * z0 - e_max).exp();
            s0 += e;
            s1 += a.y * e;
        }
        s1 / s0
    }
}

/// Tilts an atomic measure by the state `(A, M)`; `A >= 0`.
pub fn tilt_measure(base: &AtomicMeasure, a: f64, m: f64) -> Result<TiltedMeasure> {
    if !(a >= 0.0) {
        return Err(Error::NonPositiveArgument(a));
    }
    let log_weights = base
        .atoms()
        .iter()
        .map(|atom| atom.w.ln() + atom.y * (1.0 - 0.5 * atom.y) * a + atom.y * m)
        .collect();
    Ok(TiltedMeasure {
        base: base.clone(),
        a,
        m,
        log_weights,
    })
}

/// The process `H_t = (h_z / h)(h^{-1}(x0, 0) + A_t + M_t, A_t)`: the
/// risk-tolerance weight of the closed-form optimal policy. Constant `1/gamma`
/// for the Dirac CRRA measure.
pub fn h_process(
    h: &HeatFunction,
    x0_rel: f64,
    a_path: &TimeChangePath,
    m_path: &MartingalePartPath,
) -> Result<Vec<f64>> {
    if !(x0_rel > 0.0) {
        return Err(Error::NonPositiveWealth(x0_rel));
    }
    let z0 = h.inverse(x0_rel, 0.0)?;
    Ok(a_path
        .values
        .iter()
        .zip(&m_path.values)
        .map(|(&a, &m)| h.ratio_zh(z0 + a + m, a))
        .collect())
}

/// Forward criterion value `V(x~, t) = u(x~ / B_t, A_t)`.
pub fn forward_value_div(u: &ForwardUtility, x_rel: f64, a_t: f64, b_t: f64) -> Result<f64> {
    if !(x_rel > 0.0) {
        return Err(Error::NonPositiveWealth(x_rel));
    }
    u.u(x_rel / b_t, a_t)
}

/// Closed-form optimal relative wealth
/// `X~* = B h(h^{-1}(x0, 0) + A + M, A)`.
pub fn optimal_relative_wealth_div(
    h: &HeatFunction,
    x0_rel: f64,
    a_path: &TimeChangePath,
    m_path: &MartingalePartPath,
    b_path: &DiscountPath,
    manager: Manager,
) -> Result<crate::wealth::RelativeWealthPath> {
    if !(x0_rel > 0.0) {
        return Err(Error::NonPositiveWealth(x0_rel));
    }
    let z0 = h.inverse(x0_rel, 0.0)?;
    let values = a_path
        .values
        .iter()
        .zip(&m_path.values)
        .zip(&b_path.values)
        .map(|((&a, &m), &b)| b * h.eval(z0 + a + m, a))
        .collect();
    Ok(crate::wealth::RelativeWealthPath {
        values,
        manager,
        theta: b_path.theta,
    })
}
