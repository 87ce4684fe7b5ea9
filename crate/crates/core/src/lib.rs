//! Simulation and numerical-verification laboratory for supercritical nearly
//! unstable Hawkes processes.
//!
//! A Hawkes process counts events arriving at the conditional rate
//!
//! ```text
//! lambda_t = mu + sum_{t_i < t} a * phi(t - t_i)
//! ```
//!
//! where `phi` is a probability density (the excitation kernel) and `a > 1`
//! is the branching ratio. The lab covers the whole pipeline needed to study
//! the nearly unstable regime `a_T -> 1+` as the horizon `T` grows:
//!
//! - [`kernels`]: excitation kernel families, scaling regimes and the
//!   Malthusian tilt rate,
//! - [`renewal`]: a Volterra solver for the renewal function driving the
//!   mean of the process, its limit profiles and the compound-geometric
//!   sampling oracle,
//! - [`hawkes`]: exact event-level simulation by thinning and by the
//!   cluster (immigration-birth) representation, with martingale
//!   diagnostics,
//! - [`cir`]: the square-root limit diffusion and its running integral,
//! - [`mc`]: replicated experiments checking the law of large numbers and
//!   the central limit theorem of the scaled process,
//! - [`verify`]: the full acceptance matrix behind the `verify` CLI command.
//!
//! All randomness flows from explicit seeds through [`rng::seeded_stream`];
//! re-running any experiment with the same configuration reproduces its
//! output byte for byte.

pub mod cir;
pub mod hawkes;
pub mod kernels;
pub mod mc;
pub mod renewal;
pub mod rng;
pub mod stats;
pub mod verify;

pub use cir::{CirParams, CirPath};
pub use hawkes::{Algorithm, EventPath, PathDiagnostics, SimulationParams};
pub use kernels::{Kernel, MalthusianSolution, ScalingRegime};
pub use mc::{CltReport, ExperimentConfig, LlnReport, RegimeChoice};
pub use renewal::RenewalTable;
