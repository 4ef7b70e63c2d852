//! Zero-mean i.i.d. noise drivers, their cumulant functions `H(t) = log E exp(tξ)`
//! and the exponentially tilted measures `dQ_t/dP = exp(tξ - H(t))`.
//!
//! Four kinds are supported:
//!
//! * [`NoiseModel::Gaussian01`]: standard normal, `H(t) = t²/2`.
//! * [`NoiseModel::SkellamUnit`]: difference of two independent Poisson(1)
//!   variables, `H(t) = eᵗ + e⁻ᵗ - 2`.
//! * [`NoiseModel::FiniteSupport`]: a centered discrete law on finitely many atoms.
//! * [`NoiseModel::Sum`]: the sum of two independent models, `H = H₁ + H₂`.

mod conditions;
mod conjugate;
mod rate;

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use thiserror::Error;

pub use conditions::{check_conditions, check_conditions_with, ConditionRow, ConditionSummary, ConditionsReport};
pub use conjugate::{legendre, tilt, ConjugateSolver, TiltSolution};
pub use rate::{empirical_scaled_rate, scaled_rate, RateFn, RateProfile, Speed};

/// Tolerance on the normalization and the mean of finite-support atoms.
pub const ATOM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("t = {0} is outside the cumulant domain")]
    Domain(f64),
    #[error("invalid finite-support atoms: {0}")]
    InvalidAtoms(String),
    #[error("mean {target} is not attainable by tilting; attainable means lie in ({lo}, {hi})")]
    UnattainableTilt { target: f64, lo: f64, hi: f64 },
    #[error("no known rate profile for {0}; supply a speed to empirical_scaled_rate instead")]
    UnknownProfile(String),
    #[error("invalid rate profile: {0}")]
    InvalidProfile(String),
    #[error("noise scale eps = {0} must lie in (0, 1)")]
    InvalidEps(f64),
}

/// Value and first two derivatives of the cumulant function at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cumulant {
    pub h: f64,
    pub h1: f64,
    pub h2: f64,
}

impl std::ops::Add for Cumulant {
    type Output = Cumulant;

    fn add(self, rhs: Cumulant) -> Cumulant {
        Cumulant {
            h: self.h + rhs.h,
            h1: self.h1 + rhs.h1,
            h2: self.h2 + rhs.h2,
        }
    }
}

/// A discrete zero-mean law. Atoms with zero probability are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSupport {
    values: Vec<f64>,
    log_probs: Vec<f64>,
    probs: Vec<f64>,
}

impl FiniteSupport {
    /// Builds the law from `(value, probability)` pairs. The mean must already be zero.
    pub fn new(atoms: &[(f64, f64)]) -> Result<Self, NoiseError> {
        Self::build(atoms, false)
    }

    /// Like [`FiniteSupport::new`] but shifts the values so that the mean is zero.
    pub fn centered(atoms: &[(f64, f64)]) -> Result<Self, NoiseError> {
        Self::build(atoms, true)
    }

    fn build(atoms: &[(f64, f64)], center: bool) -> Result<Self, NoiseError> {
        if atoms.is_empty() {
            return Err(NoiseError::InvalidAtoms("no atoms".into()));
        }
        for &(v, p) in atoms {
            if !v.is_finite() || !p.is_finite() || p < 0.0 {
                return Err(NoiseError::InvalidAtoms(format!("atom ({v}, {p})")));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > ATOM_TOLERANCE {
            return Err(NoiseError::InvalidAtoms(format!("probabilities sum to {total}")));
        }
        let mean: f64 = atoms.iter().map(|&(v, p)| v * p).sum();
        let shift = if center {
            mean
        } else if mean.abs() > ATOM_TOLERANCE {
            return Err(NoiseError::InvalidAtoms(format!("mean is {mean}, expected 0")));
        } else {
            0.0
        };
        let kept: Vec<(f64, f64)> = atoms
            .iter()
            .filter(|a| a.1 > 0.0)
            .map(|&(v, p)| (v - shift, p))
            .collect();
        Ok(FiniteSupport {
            values: kept.iter().map(|a| a.0).collect(),
            log_probs: kept.iter().map(|a| a.1.ln()).collect(),
            probs: kept.iter().map(|a| a.1).collect(),
        })
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().copied().zip(self.probs.iter().copied())
    }

    fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Log-weights `log pᵢ + t vᵢ` and their log-sum-exp.
    fn tilted_log_weights(&self, t: f64) -> (Vec<f64>, f64) {
        let lw: Vec<f64> = self
            .log_probs
            .iter()
            .zip(&self.values)
            .map(|(lp, v)| lp + t * v)
            .collect();
        let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = top + lw.iter().map(|x| (x - top).exp()).sum::<f64>().ln();
        (lw, lse)
    }

    fn cumulant(&self, t: f64) -> Cumulant {
        let (lw, h) = self.tilted_log_weights(t);
        let weights: Vec<f64> = lw.iter().map(|x| (x - h).exp()).collect();
        let h1: f64 = weights.iter().zip(&self.values).map(|(w, v)| w * v).sum();
        let h2: f64 = weights
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * (v - h1) * (v - h1))
            .sum();
        Cumulant { h, h1, h2 }
    }
}

/// Law of the driving noise ξ.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    Gaussian01,
    /// Difference of two independent Poisson(1) variables.
    SkellamUnit,
    FiniteSupport(FiniteSupport),
    Sum(Box<NoiseModel>, Box<NoiseModel>),
}

impl NoiseModel {
    pub fn sum(left: NoiseModel, right: NoiseModel) -> NoiseModel {
        NoiseModel::Sum(Box::new(left), Box::new(right))
    }

    /// `H`, `H'` and `H''` at `t`. Every built-in kind has `H` finite on the whole line;
    /// only non-finite `t` is rejected. Overflow for very large `|t|` yields `inf`.
    pub fn cumulant_derivs(&self, t: f64) -> Result<Cumulant, NoiseError> {
        if !t.is_finite() {
            return Err(NoiseError::Domain(t));
        }
        Ok(self.derivs_unchecked(t))
    }

    fn derivs_unchecked(&self, t: f64) -> Cumulant {
        match self {
            NoiseModel::Gaussian01 => Cumulant {
                h: 0.5 * t * t,
                h1: t,
                h2: 1.0,
            },
            NoiseModel::SkellamUnit => {
                // 2(cosh t - 1) = 4 sinh²(t/2), accurate near 0
                let s = (0.5 * t).sinh();
                Cumulant {
                    h: 4.0 * s * s,
                    h1: 2.0 * t.sinh(),
                    h2: 2.0 * t.cosh(),
                }
            }
            NoiseModel::FiniteSupport(fs) => fs.cumulant(t),
            NoiseModel::Sum(l, r) => l.derivs_unchecked(t) + r.derivs_unchecked(t),
        }
    }

    /// Cumulant function `H(t) = log E exp(tξ)`.
    pub fn cumulant(&self, t: f64) -> Result<f64, NoiseError> {
        self.cumulant_derivs(t).map(|c| c.h)
    }

    /// Interval on which `H` is finite.
    pub fn t_domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Open interval of means reachable by tilting, i.e. the range of `H'`.
    /// A degenerate law yields an empty interval `(c, c)`.
    pub fn mean_range(&self) -> (f64, f64) {
        match self {
            NoiseModel::Gaussian01 | NoiseModel::SkellamUnit => (f64::NEG_INFINITY, f64::INFINITY),
            NoiseModel::FiniteSupport(fs) => (fs.min_value(), fs.max_value()),
            NoiseModel::Sum(l, r) => {
                let (a, b) = l.mean_range();
                let (c, d) = r.mean_range();
                (a + c, b + d)
            }
        }
    }

    /// True when `target` lies strictly inside [`NoiseModel::mean_range`].
    pub fn attains_mean(&self, target: f64) -> bool {
        let (lo, hi) = self.mean_range();
        lo < target && target < hi
    }

    /// Sampler for the tilted law `Q_t`. `t = 0` gives the law itself.
    pub fn tilted_sampler(&self, t: f64) -> Result<TiltedSampler, NoiseError> {
        if !t.is_finite() {
            return Err(NoiseError::Domain(t));
        }
        Ok(match self {
            NoiseModel::Gaussian01 => TiltedSampler::Gaussian { shift: t },
            NoiseModel::SkellamUnit => TiltedSampler::Skellam {
                up: poisson(t.exp(), t)?,
                down: poisson((-t).exp(), t)?,
            },
            NoiseModel::FiniteSupport(fs) => {
                let (lw, lse) = fs.tilted_log_weights(t);
                let mut acc = 0.0;
                let cdf = lw
                    .iter()
                    .map(|x| {
                        acc += (x - lse).exp();
                        acc
                    })
                    .collect();
                TiltedSampler::Finite {
                    values: fs.values.clone(),
                    cdf,
                }
            }
            NoiseModel::Sum(l, r) => {
                TiltedSampler::Sum(Box::new(l.tilted_sampler(t)?), Box::new(r.tilted_sampler(t)?))
            }
        })
    }

    /// One draw from the tilted law `Q_t`.
    pub fn tilted_sample<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> Result<f64, NoiseError> {
        Ok(self.tilted_sampler(t)?.sample(rng))
    }

    /// One draw from the law itself.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // t = 0 is always in the domain
        self.tilted_sampler(0.0).expect("t = 0").sample(rng)
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::Gaussian01 => write!(f, "gaussian"),
            NoiseModel::SkellamUnit => write!(f, "skellam"),
            NoiseModel::FiniteSupport(fs) => write!(f, "finite-support[{}]", fs.values.len()),
            NoiseModel::Sum(l, r) => write!(f, "sum({l}, {r})"),
        }
    }
}

fn poisson(lambda: f64, t: f64) -> Result<Option<Poisson<f64>>, NoiseError> {
    if lambda == 0.0 {
        return Ok(None);
    }
    Poisson::new(lambda).map(Some).map_err(|_| NoiseError::Domain(t))
}

/// Pre-built sampler for a tilted law; cheap to reuse across many draws.
#[derive(Debug, Clone)]
pub enum TiltedSampler {
    Gaussian { shift: f64 },
    Skellam { up: Option<Poisson<f64>>, down: Option<Poisson<f64>> },
    Finite { values: Vec<f64>, cdf: Vec<f64> },
    Sum(Box<TiltedSampler>, Box<TiltedSampler>),
}

impl Distribution<f64> for TiltedSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            TiltedSampler::Gaussian { shift } => {
                let z: f64 = rng.sample(StandardNormal);
                z + shift
            }
            TiltedSampler::Skellam { up, down } => {
                let a = up.as_ref().map_or(0.0, |d| d.sample(rng));
                let b = down.as_ref().map_or(0.0, |d| d.sample(rng));
                a - b
            }
            TiltedSampler::Finite { values, cdf } => {
                let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
                let idx = cdf.partition_point(|&c| c <= u).min(values.len() - 1);
                values[idx]
            }
            TiltedSampler::Sum(l, r) => l.sample(rng) + r.sample(rng),
        }
    }
}
