//! Monte Carlo estimation of exceedance probabilities and exit times, with
//! exponentially tilted importance sampling along the optimal exit profile.
//!
//! All estimators take a [`MonteCarlo`] describing the master seed and worker
//! count; results are bitwise reproducible for a fixed seed and independent of
//! the worker count.

mod exceedance;
mod exit_time;
mod parallel;
mod survival;

use std::fmt;
use std::io;

use thiserror::Error;

use crate::noise::NoiseError;
use crate::recursion::RecursionError;

pub use exceedance::{crude_mc_exceedance, rate_sweep, tilted_is_exceedance, tilted_is_exceedance_with, HitTimes, IsOptions, RateSweep};
pub use exit_time::{exit_time_mc, exit_time_mc_with, ExitTimeResult};
pub use parallel::{derive_seed, MonteCarlo};
pub use survival::{survival_vs_geometric, SurvivalRow, SurvivalTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RareEventError {
    #[error("run {run}: {source}")]
    Simulation { run: u64, source: RecursionError },
    #[error("step {step}: noise cannot be tilted to mean {mean}")]
    UnattainableTilt { step: usize, mean: f64 },
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Model(#[from] RecursionError),
    #[error("usage: {0}")]
    Usage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Crude,
    Tilted,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Crude => "crude",
            Method::Tilted => "tilted",
        })
    }
}

/// Estimate of `P(max_{k ≤ horizon} |X_k| ≥ level)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResult {
    pub p_hat: f64,
    pub std_err: f64,
    pub n: u64,
    /// `log p̂`, `None` when no run hit.
    pub log_p: Option<f64>,
    /// `q(ε) log p̂`; also `None` when the noise has no known speed.
    pub scaled_log_p: Option<f64>,
    pub eps: f64,
    pub method: Method,
    /// `(Σ w)² / Σ w²` over the weighted indicators.
    pub ess: Option<f64>,
    pub seed: u64,
    pub hits: u64,
}

impl EstimatorResult {
    pub fn zero_hit(&self) -> bool {
        self.hits == 0
    }

    /// `std_err / p̂`, infinite with no hits.
    pub fn relative_error(&self) -> f64 {
        if self.p_hat > 0.0 {
            self.std_err / self.p_hat
        } else {
            f64::INFINITY
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Columns `eps, method, n, p_hat, std_err, scaled_log_p, ess`.
pub fn write_exceedance_csv<W: io::Write>(writer: W, results: &[EstimatorResult]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["eps", "method", "n", "p_hat", "std_err", "scaled_log_p", "ess"])?;
    for r in results {
        w.write_record([
            r.eps.to_string(),
            r.method.to_string(),
            r.n.to_string(),
            r.p_hat.to_string(),
            r.std_err.to_string(),
            opt(r.scaled_log_p),
            opt(r.ess),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Ordinary least squares `y ≈ intercept + slope x`; `None` with fewer than two
/// distinct abscissae.
pub(crate) fn least_squares(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}
