//! Large deviations for small-noise, past-dependent recursions
//!
//! ```text
//! X_k = f(X_{k-1}, ..., X_{k-m}, ε ξ_k)
//! ```
//!
//! * [`noise`]: cumulant functions, Fenchel–Legendre transforms, exponential tilting
//!   and the scaled rate profiles `(q(ε), I(v))`.
//! * [`recursion`]: simulation, zero-noise skeletons, exit times and the sequence metric.
//! * [`action`]: the path action `J`, closed-form and numeric exit-action minimization.
//! * [`rare_event`]: crude and tilted Monte Carlo for exceedance probabilities and exit times.

pub mod action;
pub mod noise;
pub mod rare_event;
pub mod recursion;

mod roots;

pub use noise::{NoiseError, NoiseModel, RateProfile};
pub use recursion::{RecursionError, RecursionModel, TransitionMap, Trajectory};

