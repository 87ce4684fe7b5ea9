//! Excitation kernels, scaling regimes and the Malthusian tilt rate.
//!
//! The kernel `phi` is a probability density on `[0, inf)` with unit mass
//! and finite mean `m`. Two families are supported, both with closed-form
//! transforms so that every numerical layer downstream has an analytic
//! oracle:
//!
//! - `Exponential(beta)`: `phi(t) = beta * exp(-beta t)`, mean `1/beta`,
//! - `Erlang(k, beta)`:   `phi(t) = beta^k t^(k-1) exp(-beta t)/(k-1)!`,
//!   mean `k/beta`.
//!
//! For a branching ratio `a > 1` the Malthusian rate `b` is the unique
//! positive solution of
//!
//! ```text
//! integral_0^inf exp(-b s) * a * phi(s) ds = 1 / a,
//! ```
//!
//! i.e. the exponential tilt that turns the supercritical kernel `a*phi`
//! into a defective density of mass exactly `1/a`.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("kernel rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("erlang shape must be at least 1, got {0}")]
    ZeroShape(u32),
    #[error("regime parameter out of range: {0}")]
    InvalidRegime(String),
    #[error("malthusian rate requires a branching ratio above 1, got {0}")]
    SubcriticalBranching(f64),
    #[error("malthusian solver failed to converge (residual {residual:e} after {iterations} iterations)")]
    NoConvergence { residual: f64, iterations: usize },
}

/// Normalized excitation kernel: a probability density on `[0, inf)` with
/// finite positive mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
}

impl Kernel {
    pub fn exponential(rate: f64) -> Result<Self, KernelError> {
        if !(rate > 0.0) {
            return Err(KernelError::NonPositiveRate(rate));
        }
        Ok(Kernel::Exponential { rate })
    }

    pub fn erlang(shape: u32, rate: f64) -> Result<Self, KernelError> {
        if !(rate > 0.0) {
            return Err(KernelError::NonPositiveRate(rate));
        }
        if shape == 0 {
            return Err(KernelError::ZeroShape(shape));
        }
        Ok(Kernel::Erlang { shape, rate })
    }

    /// Decay rate `beta` of the exponential factor.
    pub fn rate(&self) -> f64 {
        match *self {
            Kernel::Exponential { rate } => rate,
            Kernel::Erlang { rate, .. } => rate,
        }
    }

    /// Number of exponential stages (1 for the exponential family).
    pub fn shape(&self) -> u32 {
        match *self {
            Kernel::Exponential { .. } => 1,
            Kernel::Erlang { shape, .. } => shape,
        }
    }

    /// Density `phi(t)`; zero for `t < 0`.
    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let beta = self.rate();
        match *self {
            Kernel::Exponential { .. } => beta * (-beta * t).exp(),
            Kernel::Erlang { shape, .. } => {
                let k = shape as f64;
                // beta^k t^(k-1) e^(-beta t) / (k-1)!, evaluated in log space
                // to stay finite for large shapes.
                if t == 0.0 {
                    return if shape == 1 { beta } else { 0.0 };
                }
                let log_density = k * beta.ln() + (k - 1.0) * t.ln() - beta * t
                    - ln_factorial(shape - 1);
                log_density.exp()
            }
        }
    }

    /// Cumulative mass `Phi(t) = integral_0^t phi(s) ds`, in `[0, 1]`.
    pub fn cumulative(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let beta = self.rate();
        match *self {
            Kernel::Exponential { .. } => -(-beta * t).exp_m1(),
            Kernel::Erlang { shape, .. } => {
                // 1 - e^(-beta t) * sum_{j<k} (beta t)^j / j!
                let x = beta * t;
                let mut term = 1.0;
                let mut sum = 1.0;
                for j in 1..shape {
                    term *= x / j as f64;
                    sum += term;
                }
                1.0 - (-x).exp() * sum
            }
        }
    }

    /// Laplace transform `integral_0^inf exp(-b s) phi(s) ds = (beta/(beta+b))^k`.
    pub fn laplace(&self, b: f64) -> f64 {
        debug_assert!(b >= 0.0);
        let beta = self.rate();
        let base = beta / (beta + b);
        match *self {
            Kernel::Exponential { .. } => base,
            Kernel::Erlang { shape, .. } => base.powi(shape as i32),
        }
    }

    /// First moment `m = k / beta`.
    pub fn mean(&self) -> f64 {
        self.shape() as f64 / self.rate()
    }

    /// Whether the density is non-increasing on `[0, inf)`. Only the
    /// exponential family qualifies; Erlang densities with shape >= 2 rise
    /// to a mode before decaying.
    pub fn has_monotone_density(&self) -> bool {
        self.shape() == 1
    }

    /// Peak value of the density: `beta` for the exponential family,
    /// `phi((k-1)/beta)` for Erlang.
    pub fn max_density(&self) -> f64 {
        match *self {
            Kernel::Exponential { rate } => rate,
            Kernel::Erlang { shape, rate } => self.density((shape as f64 - 1.0) / rate),
        }
    }
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n as u64).map(|i| (i as f64).ln()).sum()
}

/// The scaling family `{a_T}` of branching ratios indexed by the horizon.
///
/// Both regimes keep `a_T > 1` for every finite horizon and drive it to 1:
/// `HLambda` keeps `T (a_T - 1)` pinned at `lambda`, `HInfinity` lets it
/// diverge like `T^(1 - alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalingRegime {
    /// `a_T = 1 + lambda / T`.
    HLambda { lambda: f64 },
    /// `a_T = 1 + T^(-alpha)` with `alpha` in `(0, 1)`.
    HInfinity { alpha: f64 },
}

impl ScalingRegime {
    pub fn h_lambda(lambda: f64) -> Result<Self, KernelError> {
        if !(lambda > 0.0) {
            return Err(KernelError::InvalidRegime(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(ScalingRegime::HLambda { lambda })
    }

    pub fn h_infinity(alpha: f64) -> Result<Self, KernelError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(KernelError::InvalidRegime(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        Ok(ScalingRegime::HInfinity { alpha })
    }

    /// The criticality gap `a_T - 1`, computed directly so callers never
    /// lose precision to the `1 + x - 1` round trip.
    pub fn gap(&self, horizon: f64) -> f64 {
        match *self {
            ScalingRegime::HLambda { lambda } => lambda / horizon,
            ScalingRegime::HInfinity { alpha } => horizon.powf(-alpha),
        }
    }

    /// Branching ratio `a_T` at the given horizon.
    pub fn branching_ratio(&self, horizon: f64) -> f64 {
        1.0 + self.gap(horizon)
    }

    /// `T (a_T - 1)` evaluated without cancellation: exactly `lambda` under
    /// `HLambda`, `T^(1 - alpha)` under `HInfinity`.
    pub fn horizon_gap(&self, horizon: f64) -> f64 {
        match *self {
            ScalingRegime::HLambda { lambda } => lambda,
            ScalingRegime::HInfinity { alpha } => horizon.powf(1.0 - alpha),
        }
    }
}

/// Root of the tilt equation together with the tilted moments.
#[derive(Debug, Clone, Copy)]
pub struct MalthusianSolution {
    /// The tilt rate `b > 0`.
    pub rate: f64,
    /// `integral exp(-b s) a phi(s) ds`; equals `1/a` up to solver tolerance.
    pub tilted_mass: f64,
    /// `integral exp(-b s) s a phi(s) ds`; at most `m`, tends to `m` as `a -> 1`.
    pub tilted_mean: f64,
}

/// Residual tolerance of the Malthusian root: `|a L(b) - 1/a| <= 1e-12`.
pub const MALTHUSIAN_TOLERANCE: f64 = 1e-12;

/// Solves `a * laplace(b) = 1/a` for the unique positive tilt rate.
///
/// The left side is strictly decreasing in `b`, from `a` at zero towards
/// zero, so a doubling bracket followed by bisection and Newton polishing
/// converges globally. Rejects `a <= 1`, where no positive root exists.
pub fn solve_malthusian(kernel: &Kernel, a: f64) -> Result<MalthusianSolution, KernelError> {
    if !(a > 1.0) {
        return Err(KernelError::SubcriticalBranching(a));
    }
    let target = 1.0 / a;
    let residual = |b: f64| a * kernel.laplace(b) - target;
    let beta = kernel.rate();
    let k = kernel.shape() as f64;
    // d/db [a L(b)] = -a k L(b) / (beta + b) for the Erlang family.
    let derivative = |b: f64| -a * k * kernel.laplace(b) / (beta + b);

    // Bracket: double until the residual turns negative.
    let mut hi = ((a - target) / kernel.mean()).max(1e-300);
    let mut doubling = 0;
    while residual(hi) > 0.0 {
        hi *= 2.0;
        doubling += 1;
        if doubling > 2100 {
            return Err(KernelError::NoConvergence {
                residual: residual(hi),
                iterations: doubling,
            });
        }
    }
    let mut lo = 0.0_f64;

    // Bisection down to an interval of relative width ~1e-6.
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    // Newton polishing, kept inside the bracket.
    let mut b = 0.5 * (lo + hi);
    let mut r = residual(b);
    for _ in 0..64 {
        if r.abs() <= 0.1 * MALTHUSIAN_TOLERANCE {
            break;
        }
        let step = r / derivative(b);
        let mut next = b - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let rn = residual(next);
        if rn > 0.0 {
            lo = next;
        } else {
            hi = next;
        }
        b = next;
        r = rn;
    }
    if r.abs() > MALTHUSIAN_TOLERANCE {
        return Err(KernelError::NoConvergence {
            residual: r,
            iterations: 64,
        });
    }

    // Tilted mean in closed form: a * k * L(b) / (beta + b).
    let tilted_mean = a * k * kernel.laplace(b) / (beta + b);
    Ok(MalthusianSolution {
        rate: b,
        tilted_mass: a * kernel.laplace(b),
        tilted_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Composite Simpson quadrature, used as the independent oracle for the
    /// closed-form moments.
    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut sum = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 0 { 2.0 } else { 4.0 };
            sum += w * f(a + i as f64 * h);
        }
        sum * h / 3.0
    }

    #[test]
    fn density_examples() {
        let exp1 = Kernel::exponential(1.0).unwrap();
        assert_eq!(exp1.density(0.0), 1.0);
        let exp2 = Kernel::exponential(2.0).unwrap();
        assert!((exp2.density(0.5) - 2.0 * (-1.0_f64).exp()).abs() < 1e-12);
        assert!((exp2.density(0.5) - 0.735758882342885).abs() < 1e-9);
        let erl = Kernel::erlang(2, 1.0).unwrap();
        assert_eq!(erl.density(0.0), 0.0);
        assert_eq!(erl.density(-1.0), 0.0);
        assert_eq!(exp1.density(-0.5), 0.0);
    }

    #[test]
    fn cumulative_examples() {
        let exp1 = Kernel::exponential(1.0).unwrap();
        assert!((exp1.cumulative(1e3) - 1.0).abs() < 1e-12);
        assert!((exp1.cumulative(1.0) - 0.6321205588285577).abs() < 1e-12);
        let erl = Kernel::erlang(2, 1.0).unwrap();
        assert!((erl.cumulative(1.0) - 0.2642411176571153).abs() < 1e-12);
        assert_eq!(erl.cumulative(0.0), 0.0);
    }

    #[test]
    fn laplace_examples() {
        let exp1 = Kernel::exponential(1.0).unwrap();
        assert_eq!(exp1.laplace(0.0), 1.0);
        assert_eq!(exp1.laplace(1.0), 0.5);
        let erl = Kernel::erlang(2, 1.0).unwrap();
        assert_eq!(erl.laplace(1.0), 0.25);
    }

    #[test]
    fn first_moments() {
        assert_eq!(Kernel::exponential(1.0).unwrap().mean(), 1.0);
        assert_eq!(Kernel::exponential(4.0).unwrap().mean(), 0.25);
        assert_eq!(Kernel::erlang(2, 1.0).unwrap().mean(), 2.0);
    }

    #[test]
    fn unit_mass_by_quadrature() {
        for kernel in [
            Kernel::exponential(1.0).unwrap(),
            Kernel::exponential(0.5).unwrap(),
            Kernel::exponential(2.0).unwrap(),
            Kernel::erlang(2, 1.0).unwrap(),
            Kernel::erlang(3, 0.7).unwrap(),
        ] {
            let mass = simpson(|t| kernel.density(t), 0.0, 50.0 * kernel.mean(), 40_000);
            assert!(
                (mass - 1.0).abs() < 1e-6,
                "mass {mass} for {kernel:?}"
            );
            let mean = simpson(|t| t * kernel.density(t), 0.0, 60.0 * kernel.mean(), 40_000);
            assert!((mean - kernel.mean()).abs() < 1e-6);
        }
    }

    #[test]
    fn laplace_strictly_decreasing() {
        for kernel in [
            Kernel::exponential(1.3).unwrap(),
            Kernel::erlang(4, 2.0).unwrap(),
        ] {
            let mut prev = kernel.laplace(0.0);
            assert_eq!(prev, 1.0);
            for i in 1..200 {
                let cur = kernel.laplace(i as f64 * 0.05);
                assert!(cur < prev);
                prev = cur;
            }
        }
    }

    #[test]
    fn malthusian_closed_forms() {
        // Exponential: b = beta (a^2 - 1); Erlang(2): b = beta (a - 1).
        let exp1 = Kernel::exponential(1.0).unwrap();
        let sol = solve_malthusian(&exp1, 1.1).unwrap();
        assert!((sol.rate - 0.21).abs() < 1e-10);
        let erl = Kernel::erlang(2, 1.0).unwrap();
        let sol = solve_malthusian(&erl, 1.1).unwrap();
        assert!((sol.rate - 0.1).abs() < 1e-10);
        // Near-critical first-order expansion.
        let sol = solve_malthusian(&exp1, 1.0 + 1e-8).unwrap();
        assert!((sol.rate - 2e-8).abs() < 1e-12);
    }

    #[test]
    fn malthusian_residuals_within_tolerance() {
        for kernel in [
            Kernel::exponential(1.0).unwrap(),
            Kernel::erlang(2, 1.0).unwrap(),
        ] {
            for a in [1.001, 1.01, 1.1, 1.5] {
                let sol = solve_malthusian(&kernel, a).unwrap();
                let residual = (a * kernel.laplace(sol.rate) - 1.0 / a).abs();
                assert!(residual <= MALTHUSIAN_TOLERANCE, "residual {residual:e}");
                assert!(sol.rate > 0.0);
                assert!((sol.tilted_mass - 1.0 / a).abs() <= MALTHUSIAN_TOLERANCE);
            }
        }
    }

    #[test]
    fn tilted_mean_below_mean_and_converging() {
        for kernel in [
            Kernel::exponential(1.0).unwrap(),
            Kernel::erlang(2, 1.0).unwrap(),
        ] {
            let m = kernel.mean();
            let mut prev_gap = f64::INFINITY;
            for a in [1.5, 1.1, 1.01, 1.001] {
                let sol = solve_malthusian(&kernel, a).unwrap();
                assert!(sol.tilted_mean <= m);
                let gap = m - sol.tilted_mean;
                assert!(gap < prev_gap);
                prev_gap = gap;
            }
        }
    }

    #[test]
    fn tilted_mean_matches_quadrature() {
        for kernel in [
            Kernel::exponential(0.8).unwrap(),
            Kernel::erlang(3, 1.5).unwrap(),
        ] {
            let a = 1.2;
            let sol = solve_malthusian(&kernel, a).unwrap();
            let oracle = simpson(
                |s| (-sol.rate * s).exp() * s * a * kernel.density(s),
                0.0,
                80.0 * kernel.mean(),
                60_000,
            );
            assert!((sol.tilted_mean - oracle).abs() < 1e-8);
        }
    }

    #[test]
    fn subcritical_branching_rejected() {
        let kernel = Kernel::exponential(1.0).unwrap();
        assert!(matches!(
            solve_malthusian(&kernel, 1.0),
            Err(KernelError::SubcriticalBranching(_))
        ));
        assert!(solve_malthusian(&kernel, 0.9).is_err());
    }

    #[test]
    fn regime_identities() {
        let hl = ScalingRegime::h_lambda(2.5).unwrap();
        for t in [10.0, 100.0, 1000.0] {
            assert_eq!(hl.horizon_gap(t), 2.5);
            assert!(hl.branching_ratio(t) > 1.0);
        }
        let hi = ScalingRegime::h_infinity(0.5).unwrap();
        for t in [10.0, 100.0, 1000.0] {
            assert_eq!(hi.horizon_gap(t), t.sqrt());
        }
        assert!(ScalingRegime::h_lambda(0.0).is_err());
        assert!(ScalingRegime::h_infinity(1.0).is_err());
        assert!(ScalingRegime::h_infinity(0.0).is_err());
    }

    #[test]
    fn horizon_times_tilt_rate_limit() {
        // Under HLambda, T * b_T -> 2 lambda / m.
        let lambda = 1.0;
        let t = 1e4;
        let regime = ScalingRegime::h_lambda(lambda).unwrap();
        for kernel in [
            Kernel::exponential(1.0).unwrap(),
            Kernel::erlang(2, 1.0).unwrap(),
        ] {
            let a = regime.branching_ratio(t);
            let sol = solve_malthusian(&kernel, a).unwrap();
            let target = 2.0 * lambda / kernel.mean();
            assert!(
                (t * sol.rate - target).abs() <= 0.05 * target,
                "T b_T = {} vs {target}",
                t * sol.rate
            );
        }
    }

    #[test]
    fn invalid_kernels_rejected() {
        assert!(Kernel::exponential(0.0).is_err());
        assert!(Kernel::exponential(-1.0).is_err());
        assert!(Kernel::erlang(0, 1.0).is_err());
        assert!(Kernel::erlang(2, 0.0).is_err());
    }

    #[test]
    fn exponential_density_non_increasing() {
        let kernel = Kernel::exponential(1.7).unwrap();
        assert!(kernel.has_monotone_density());
        let mut prev = kernel.density(0.0);
        for i in 1..500 {
            let cur = kernel.density(i as f64 * 0.01);
            assert!(cur <= prev);
            prev = cur;
        }
        assert!(!Kernel::erlang(2, 1.0).unwrap().has_monotone_density());
    }

    proptest! {
        #[test]
        fn cumulative_in_unit_interval_and_monotone(
            rate in 0.2_f64..4.0,
            shape in 1u32..5,
            t1 in 0.0_f64..20.0,
            dt in 0.0_f64..20.0,
        ) {
            let kernel = Kernel::erlang(shape, rate).unwrap();
            let c1 = kernel.cumulative(t1);
            let c2 = kernel.cumulative(t1 + dt);
            prop_assert!((0.0..=1.0).contains(&c1));
            prop_assert!(c2 >= c1);
        }

        #[test]
        fn malthusian_root_positive_with_tilted_mass(
            rate in 0.2_f64..4.0,
            shape in 1u32..5,
            excess in 1e-6_f64..1.0,
        ) {
            let kernel = Kernel::erlang(shape, rate).unwrap();
            let a = 1.0 + excess;
            let sol = solve_malthusian(&kernel, a).unwrap();
            prop_assert!(sol.rate > 0.0);
            prop_assert!((sol.tilted_mass - 1.0 / a).abs() <= MALTHUSIAN_TOLERANCE);
            prop_assert!(sol.tilted_mean <= kernel.mean() * (1.0 + 1e-12));
        }
    }
}
