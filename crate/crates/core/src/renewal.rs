//! Renewal function of the (near-)critical branching cascade.
//!
//! For a branching ratio `a` the renewal function is the Neumann series
//! `R(t) = sum_{n>=1} (a phi)^(*n) (t)`; it solves the Volterra equation
//!
//! ```text
//! R = a phi + (a phi) * R        (* = convolution on [0, t])
//! ```
//!
//! and drives the mean of the Hawkes process through
//! `E[Z_t] = mu t + mu integral_0^t s R(t - s) ds`.
//!
//! For `a > 1` the series grows exponentially, so everything is stored in
//! exponentially tilted form: with the Malthusian rate `b` the tilted kernel
//! `exp(-b t) a phi(t)` has mass `1/a < 1` and the tilted renewal function
//! stays bounded with total mass `1/(a - 1)`. The untilted values exist only
//! behind an accessor that applies `exp(b t)` at query time.
//!
//! The same solver serves the sub-unit mass case `0 < a < 1` (no tilt
//! needed), which is the distributional side of the compound-geometric
//! sampling oracle: `X = (1/T) sum_{i<=I} X_i` with `X_i ~ phi` i.i.d. and
//! `I` geometric has density `T R(Tx) (1-a)/a` on the rescaled axis.

use crate::kernels::{solve_malthusian, Kernel, KernelError};
use rand::Rng;
use rand_distr::{Distribution, Geometric};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RenewalError {
    #[error("branching ratio must be positive, got {0}")]
    NonPositiveBranching(f64),
    #[error("grid step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("horizon {horizon} must be at least one grid step {step}")]
    HorizonTooShort { horizon: f64, step: f64 },
    #[error("grid step too coarse for the kernel peak (implicit weight {0} <= 0)")]
    StepTooCoarse(f64),
    #[error("query at t = {t} outside the table range [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },
    #[error("geometric parameter must lie in (0, 1), got {0}")]
    InvalidGeometricMass(f64),
    #[error("time scale must be positive, got {0}")]
    NonPositiveTimeScale(f64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Grid-sampled tilted renewal function with its Malthusian rate.
#[derive(Debug, Clone)]
pub struct RenewalTable {
    step: f64,
    /// Tilted values on the uniform grid `0, step, 2 step, ...`.
    tilted: Vec<f64>,
    /// Prefix trapezoid integrals of the tilted values.
    tilted_prefix: Vec<f64>,
    tilt_rate: f64,
    branching: f64,
}

impl RenewalTable {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        (self.tilted.len() - 1) as f64 * self.step
    }

    /// Branching ratio `a` the table was solved for.
    pub fn branching_ratio(&self) -> f64 {
        self.branching
    }

    /// Malthusian tilt rate `b` (zero in the sub-unit mass case).
    pub fn tilt_rate(&self) -> f64 {
        self.tilt_rate
    }

    fn check_range(&self, t: f64) -> Result<(), RenewalError> {
        // Tolerate one ulp-ish of drift from horizon arithmetic.
        if t < 0.0 || t > self.horizon() * (1.0 + 1e-12) {
            return Err(RenewalError::OutOfRange {
                t,
                horizon: self.horizon(),
            });
        }
        Ok(())
    }

    fn interpolate(&self, values: &[f64], t: f64) -> f64 {
        let pos = t / self.step;
        let i = (pos.floor() as usize).min(values.len() - 1);
        if i + 1 >= values.len() {
            return values[i];
        }
        let frac = pos - i as f64;
        values[i] + frac * (values[i + 1] - values[i])
    }

    /// Tilted renewal function, linearly interpolated between grid nodes.
    pub fn tilted_at(&self, t: f64) -> Result<f64, RenewalError> {
        self.check_range(t)?;
        Ok(self.interpolate(&self.tilted, t))
    }

    /// Untilted renewal function `exp(b t) * tilted(t)`.
    pub fn at(&self, t: f64) -> Result<f64, RenewalError> {
        Ok((self.tilt_rate * t).exp() * self.tilted_at(t)?)
    }

    /// Trapezoid mass of the tilted values over the whole grid; converges to
    /// `1/(a - 1)` (respectively `a/(1 - a)` below criticality) as the
    /// horizon grows.
    pub fn tilted_mass(&self) -> f64 {
        *self.tilted_prefix.last().unwrap()
    }

    /// Trapezoid integral of the tilted values over `[0, t]`.
    pub fn tilted_cumulative(&self, t: f64) -> Result<f64, RenewalError> {
        self.check_range(t)?;
        let pos = t / self.step;
        let i = (pos.floor() as usize).min(self.tilted.len() - 1);
        let base = self.tilted_prefix[i];
        if i + 1 >= self.tilted.len() {
            return Ok(base);
        }
        let dt = t - i as f64 * self.step;
        let end = self.interpolate(&self.tilted, t);
        Ok(base + 0.5 * (self.tilted[i] + end) * dt)
    }

    /// Mean of the counting process, `E[Z_t] = mu t + mu integral_0^t
    /// (t - u) exp(b u) tilted(u) du`, by trapezoid quadrature on the grid.
    pub fn expected_count(&self, mu: f64, t: f64) -> Result<f64, RenewalError> {
        self.check_range(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let g = |i: usize, u: f64| (t - u) * (self.tilt_rate * u).exp() * self.tilted[i];
        let full_cells = ((t / self.step) as usize).min(self.tilted.len() - 1);
        let mut integral = 0.0;
        let mut prev = g(0, 0.0);
        for i in 1..=full_cells {
            let cur = g(i, i as f64 * self.step);
            integral += 0.5 * (prev + cur) * self.step;
            prev = cur;
        }
        let u_last = full_cells as f64 * self.step;
        if t > u_last {
            let end = (t - t) * 0.0; // integrand vanishes at u = t
            integral += 0.5 * (prev + end) * (t - u_last);
        }
        Ok(mu * t + mu * integral)
    }
}

/// Default grid step resolving both the kernel scale and the excitation
/// peak: `min(m, 1/(a beta)) / 50`.
pub fn default_step(kernel: &Kernel, a: f64) -> f64 {
    kernel.mean().min(1.0 / (a * kernel.rate())) / 50.0
}

/// Horizon at which the tilted mass has converged for practical purposes:
/// `60 m / (a - 1)`.
pub fn mass_check_horizon(kernel: &Kernel, a: f64) -> f64 {
    60.0 * kernel.mean() / (a - 1.0)
}

/// Solves the tilted renewal equation by trapezoidal Volterra stepping on a
/// uniform grid.
///
/// For `a > 1` the tilt rate comes from [`solve_malthusian`]; for
/// `0 < a <= 1` no tilt is applied. The scheme is implicit in the current
/// node (the trapezoid weight of the `t_i` endpoint is moved to the left
/// side), with global error `O(step^2)` against the closed forms.
pub fn solve_renewal(
    kernel: &Kernel,
    a: f64,
    step: f64,
    horizon: f64,
) -> Result<RenewalTable, RenewalError> {
    if !(a > 0.0) {
        return Err(RenewalError::NonPositiveBranching(a));
    }
    if !(step > 0.0) {
        return Err(RenewalError::NonPositiveStep(step));
    }
    if horizon < step {
        return Err(RenewalError::HorizonTooShort { horizon, step });
    }
    let tilt_rate = if a > 1.0 {
        solve_malthusian(kernel, a)?.rate
    } else {
        0.0
    };

    let n = (horizon / step).ceil() as usize;
    let mut phi = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = i as f64 * step;
        phi.push((-tilt_rate * t).exp() * a * kernel.density(t));
    }

    // The tilted kernel decays exponentially; indices past the point where
    // it is negligible relative to its peak contribute nothing to the
    // convolution sums at double precision.
    let peak = phi.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = peak * 1e-40;
    let window = phi
        .iter()
        .rposition(|&v| v > cutoff)
        .unwrap_or(n)
        .max(1);

    let denom = 1.0 - 0.5 * step * phi[0];
    if denom <= 0.0 {
        return Err(RenewalError::StepTooCoarse(denom));
    }

    let mut values = vec![0.0; n + 1];
    values[0] = phi[0];
    for i in 1..=n {
        let lmax = window.min(i - 1);
        let mut conv = 0.0;
        // sum_{l=1..lmax} phi[l] * values[i - l]
        for (p, v) in phi[1..=lmax].iter().zip(values[i - lmax..i].iter().rev()) {
            conv += p * v;
        }
        if i <= window {
            conv += 0.5 * phi[i] * values[0];
        }
        values[i] = (phi[i] + step * conv) / denom;
    }

    let mut tilted_prefix = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    tilted_prefix.push(0.0);
    for i in 1..=n {
        acc += 0.5 * (values[i - 1] + values[i]) * step;
        tilted_prefix.push(acc);
    }

    Ok(RenewalTable {
        step,
        tilted: values,
        tilted_prefix,
        tilt_rate,
        branching: a,
    })
}

/// Pointwise limit of the rescaled renewal function under the pinned-window
/// regime: `(1/m) exp((lambda/m) x)`.
pub fn limit_profile_psi(lambda: f64, m: f64, x: f64) -> f64 {
    debug_assert!(lambda > 0.0 && m > 0.0 && x >= 0.0);
    (lambda / m * x).exp() / m
}

/// Limit of `E[Z_{Tx}] / T^2`, in the integrated form
/// `(mu exp((lambda/m) x) / m) integral_0^x v exp(-(lambda/m) v) dv`,
/// evaluated in closed form.
pub fn limit_profile_mean(mu: f64, lambda: f64, m: f64, x: f64) -> f64 {
    debug_assert!(mu > 0.0 && lambda > 0.0 && m > 0.0 && x >= 0.0);
    -mu * x / lambda + m * mu / (lambda * lambda) * ((lambda / m * x).exp() - 1.0)
}

/// Both sides of the uniform mean bound: the left side
/// `(a - 1) / (T exp(b T x)) * E[Z_{Tx}]` never exceeds `mu a`.
pub fn mean_bound_check(
    table: &RenewalTable,
    mu: f64,
    t_horizon: f64,
    x: f64,
) -> Result<(f64, f64), RenewalError> {
    let a = table.branching_ratio();
    let b = table.tilt_rate();
    let expected = table.expected_count(mu, t_horizon * x)?;
    let lhs = (a - 1.0) / t_horizon * (-b * t_horizon * x).exp() * expected;
    Ok((lhs, mu * a))
}

/// One draw of the compound-geometric variable `(1/T) sum_{i=1}^{I} X_i`
/// with `X_i ~ phi` i.i.d. and `I` geometric on `{1, 2, ...}` with success
/// parameter `1 - c`.
pub fn compound_geometric_sample<R: Rng + ?Sized>(
    kernel: &Kernel,
    c: f64,
    time_scale: f64,
    rng: &mut R,
) -> Result<f64, RenewalError> {
    if !(c > 0.0 && c < 1.0) {
        return Err(RenewalError::InvalidGeometricMass(c));
    }
    if !(time_scale > 0.0) {
        return Err(RenewalError::NonPositiveTimeScale(time_scale));
    }
    let failures = Geometric::new(1.0 - c)
        .expect("success probability validated above")
        .sample(rng);
    let summands = failures + 1;
    let mut sum = 0.0;
    for _ in 0..summands {
        sum += kernel.sample(rng);
    }
    Ok(sum / time_scale)
}
