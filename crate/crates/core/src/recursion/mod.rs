//! Past-dependent recursions `X_k = f(X_{k-1}, ..., X_{k-m}, ε ξ_k)` with a fixed
//! initial segment `x_0, ..., x_{m-1}`.

mod exit;
mod metric;
mod trajectory;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use thiserror::Error;

use crate::noise::NoiseModel;

pub(crate) use exit::{check_exit_args, exit_index};
pub use exit::{simulate_exit, simulate_exit_with, ExitOutcome, ExitSet};
pub use metric::{rho_distance, RhoBounds};
pub use trajectory::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecursionError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("non-finite value {value} produced at step {step}")]
    Divergence { step: usize, value: f64 },
    #[error("negative noise gain {gain} at step {step}")]
    NegativeGain { step: usize, gain: f64 },
    #[error("usage: {0}")]
    Usage(String),
}

/// `g(z_1, ..., z_m)` evaluated on a window ordered most recent first.
pub type WindowFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// `f(z_1, ..., z_m, y)` with the window ordered most recent first.
pub type MapFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// The transition `f(z_1, ..., z_m, y)`. Windows are passed most recent first,
/// so `z[0] = X_{k-1}`.
#[derive(Clone)]
pub enum TransitionMap {
    /// `a z_1 + y`
    ScalarAr1 { a: f64 },
    /// `Σ a_i z_i + y`
    LinearAr { coeffs: Vec<f64> },
    /// `a(z) + b(z) y` with `b ≥ 0`
    AffineNoise { drift: WindowFn, gain: WindowFn },
    General(MapFn),
}

impl TransitionMap {
    pub fn affine<A, B>(drift: A, gain: B) -> Self
    where
        A: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        B: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        TransitionMap::AffineNoise {
            drift: Arc::new(drift),
            gain: Arc::new(gain),
        }
    }

    pub fn general<F>(f: F) -> Self
    where
        F: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        TransitionMap::General(Arc::new(f))
    }

    pub fn apply(&self, window: &[f64], y: f64) -> f64 {
        match self {
            TransitionMap::ScalarAr1 { a } => a * window[0] + y,
            TransitionMap::LinearAr { coeffs } => linear_part(coeffs, window) + y,
            TransitionMap::AffineNoise { drift, gain } => drift(window) + gain(window) * y,
            TransitionMap::General(f) => f(window, y),
        }
    }

    /// Coefficients when the map is `Σ a_i z_i + y`.
    pub fn linear_coefficients(&self) -> Option<Vec<f64>> {
        match self {
            TransitionMap::ScalarAr1 { a } => Some(vec![*a]),
            TransitionMap::LinearAr { coeffs } => Some(coeffs.clone()),
            _ => None,
        }
    }

    fn required_memory(&self) -> Option<usize> {
        match self {
            TransitionMap::ScalarAr1 { .. } => Some(1),
            TransitionMap::LinearAr { coeffs } => Some(coeffs.len()),
            _ => None,
        }
    }
}

pub(crate) fn linear_part(coeffs: &[f64], window: &[f64]) -> f64 {
    coeffs.iter().zip(window).map(|(a, z)| a * z).sum()
}

impl fmt::Debug for TransitionMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransitionMap::ScalarAr1 { a } => f.debug_struct("ScalarAr1").field("a", a).finish(),
            TransitionMap::LinearAr { coeffs } => f.debug_struct("LinearAr").field("coeffs", coeffs).finish(),
            TransitionMap::AffineNoise { .. } => write!(f, "AffineNoise(..)"),
            TransitionMap::General(_) => write!(f, "General(..)"),
        }
    }
}

/// A recursion with its memory depth `m = initial.len()`, noise law and noise scale.
#[derive(Debug, Clone)]
pub struct RecursionModel {
    map: TransitionMap,
    initial: Vec<f64>,
    noise: NoiseModel,
    eps: f64,
}

impl RecursionModel {
    /// `eps = 0` is accepted and gives the deterministic skeleton.
    pub fn new(map: TransitionMap, initial: Vec<f64>, noise: NoiseModel, eps: f64) -> Result<Self, RecursionError> {
        if initial.is_empty() {
            return Err(RecursionError::InvalidModel("memory depth must be at least 1".into()));
        }
        if let Some(m) = map.required_memory() {
            if m != initial.len() {
                return Err(RecursionError::InvalidModel(format!(
                    "map needs {m} initial values, got {}",
                    initial.len()
                )));
            }
        }
        if initial.iter().any(|x| !x.is_finite()) {
            return Err(RecursionError::InvalidModel("initial values must be finite".into()));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(RecursionError::InvalidModel(format!("noise scale {eps} must be finite and nonnegative")));
        }
        Ok(RecursionModel {
            map,
            initial,
            noise,
            eps,
        })
    }

    /// `X_k = a X_{k-1} + ε ξ_k` from `x_0`.
    pub fn ar1(a: f64, x0: f64, noise: NoiseModel, eps: f64) -> Result<Self, RecursionError> {
        Self::new(TransitionMap::ScalarAr1 { a }, vec![x0], noise, eps)
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self, RecursionError> {
        Self::new(self.map.clone(), self.initial.clone(), self.noise.clone(), eps)
    }

    pub fn with_initial(&self, initial: Vec<f64>) -> Result<Self, RecursionError> {
        Self::new(self.map.clone(), initial, self.noise.clone(), self.eps)
    }

    pub fn memory(&self) -> usize {
        self.initial.len()
    }

    pub fn map(&self) -> &TransitionMap {
        &self.map
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub(crate) fn stepper(&self) -> Stepper<'_> {
        Stepper::new(self)
    }
}

/// The last `m` values in a ring of length `2m`, written twice so that the
/// most-recent-first window is always a contiguous slice.
#[derive(Debug, Clone)]
pub(crate) struct StateWindow {
    buf: Vec<f64>,
    pos: usize,
    m: usize,
}

impl StateWindow {
    /// `initial` is oldest first, as in `x_0, ..., x_{m-1}`.
    pub(crate) fn new(initial: &[f64]) -> Self {
        let m = initial.len();
        let mut w = StateWindow {
            buf: vec![0.0; 2 * m],
            pos: 0,
            m,
        };
        for &x in initial {
            w.push(x);
        }
        w
    }

    pub(crate) fn push(&mut self, x: f64) {
        self.pos = (self.pos + self.m - 1) % self.m;
        self.buf[self.pos] = x;
        self.buf[self.pos + self.m] = x;
    }

    /// Most recent first.
    pub(crate) fn as_slice(&self) -> &[f64] {
        &self.buf[self.pos..self.pos + self.m]
    }
}

/// Advances a recursion one step at a time from its initial segment.
pub(crate) struct Stepper<'a> {
    model: &'a RecursionModel,
    window: StateWindow,
    /// Index of the next value to be produced.
    k: usize,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a RecursionModel) -> Self {
        Stepper {
            model,
            window: StateWindow::new(&model.initial),
            k: model.memory(),
        }
    }

    /// Applies `f(window, ε ξ)` and returns the new value.
    pub(crate) fn step(&mut self, xi: f64) -> Result<f64, RecursionError> {
        let window = self.window.as_slice();
        let y = self.model.eps * xi;
        if let TransitionMap::AffineNoise { gain, .. } = &self.model.map {
            let b = gain(window);
            if b < 0.0 {
                return Err(RecursionError::NegativeGain { step: self.k, gain: b });
            }
        }
        let value = self.model.map.apply(window, y);
        if !value.is_finite() {
            return Err(RecursionError::Divergence { step: self.k, value });
        }
        self.window.push(value);
        self.k += 1;
        Ok(value)
    }
}

/// Draws `n_steps` noise values and runs the recursion; the trajectory has
/// `m + n_steps` entries and records the draws.
pub fn simulate<R: Rng + ?Sized>(model: &RecursionModel, n_steps: usize, rng: &mut R) -> Result<Trajectory, RecursionError> {
    let sampler = model.noise.tilted_sampler(0.0).expect("t = 0 is in the domain");
    let mut values = Vec::with_capacity(model.memory() + n_steps);
    values.extend_from_slice(&model.initial);
    let mut draws = Vec::with_capacity(n_steps);
    let mut stepper = model.stepper();
    for _ in 0..n_steps {
        let xi = sampler.sample(rng);
        values.push(stepper.step(xi)?);
        draws.push(xi);
    }
    Ok(Trajectory::new(values, model.memory(), model.eps, None, Some(draws)))
}

/// [`simulate`] on a ChaCha8 stream seeded from `seed`, recorded in the trajectory.
pub fn simulate_seeded(model: &RecursionModel, n_steps: usize, seed: u64) -> Result<Trajectory, RecursionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traj = simulate(model, n_steps, &mut rng)?;
    traj.seed = Some(seed);
    Ok(traj)
}

/// The zero-noise path `X_k = f(X_{k-1}, ..., X_{k-m}, 0)`.
pub fn skeleton(model: &RecursionModel, n_steps: usize) -> Result<Trajectory, RecursionError> {
    let mut values = Vec::with_capacity(model.memory() + n_steps);
    values.extend_from_slice(&model.initial);
    let mut window = StateWindow::new(&model.initial);
    for step in 0..n_steps {
        let value = model.map.apply(window.as_slice(), 0.0);
        if !value.is_finite() {
            return Err(RecursionError::Divergence {
                step: model.memory() + step,
                value,
            });
        }
        window.push(value);
        values.push(value);
    }
    Ok(Trajectory::new(values, model.memory(), 0.0, None, None))
}

/// Re-runs the recursion on recorded noise draws.
pub fn replay(model: &RecursionModel, draws: &[f64]) -> Result<Trajectory, RecursionError> {
    let mut values = Vec::with_capacity(model.memory() + draws.len());
    values.extend_from_slice(&model.initial);
    let mut stepper = model.stepper();
    for &xi in draws {
        values.push(stepper.step(xi)?);
    }
    Ok(Trajectory::new(values, model.memory(), model.eps, None, Some(draws.to_vec())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ar1(a: f64, x0: f64, eps: f64) -> RecursionModel {
        RecursionModel::ar1(a, x0, NoiseModel::Gaussian01, eps).unwrap()
    }

    #[test]
    fn window_is_most_recent_first() {
        let mut w = StateWindow::new(&[1.0, 2.0, 3.0]);
        assert_eq!(w.as_slice(), &[3.0, 2.0, 1.0]);
        w.push(4.0);
        assert_eq!(w.as_slice(), &[4.0, 3.0, 2.0]);
        for x in 5..12 {
            w.push(x as f64);
        }
        assert_eq!(w.as_slice(), &[11.0, 10.0, 9.0]);
        let mut one = StateWindow::new(&[0.5]);
        one.push(7.0);
        assert_eq!(one.as_slice(), &[7.0]);
    }

    #[test]
    fn model_validation() {
        assert!(RecursionModel::new(TransitionMap::ScalarAr1 { a: 0.5 }, vec![], NoiseModel::Gaussian01, 0.1).is_err());
        assert!(RecursionModel::new(TransitionMap::LinearAr { coeffs: vec![1.0, 2.0] }, vec![0.0], NoiseModel::Gaussian01, 0.1).is_err());
        assert!(RecursionModel::ar1(0.5, 0.0, NoiseModel::Gaussian01, -0.1).is_err());
        assert!(RecursionModel::ar1(0.5, f64::NAN, NoiseModel::Gaussian01, 0.1).is_err());
        let general = TransitionMap::general(|z, y| z[0] * z[1] + y);
        assert_eq!(RecursionModel::new(general, vec![1.0, 2.0], NoiseModel::Gaussian01, 0.1).unwrap().memory(), 2);
    }

    #[test]
    fn zero_noise_gives_the_linear_skeleton() {
        let m = ar1(0.5, 1.0, 0.0);
        let t = simulate_seeded(&m, 10, 99).unwrap();
        for (k, u) in t.values().iter().enumerate() {
            assert_eq!(*u, 0.5f64.powi(k as i32));
        }
    }

    #[test]
    fn second_order_hand_iteration() {
        let m = RecursionModel::new(
            TransitionMap::LinearAr { coeffs: vec![1.0, -0.5] },
            vec![1.0, 1.0],
            NoiseModel::Gaussian01,
            0.0,
        )
        .unwrap();
        let t = simulate_seeded(&m, 2, 0).unwrap();
        assert_eq!(t.values(), &[1.0, 1.0, 0.5, 0.0]);
        assert_eq!(skeleton(&m, 2).unwrap().values(), &[1.0, 1.0, 0.5, 0.0]);
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let m = ar1(0.9, 0.0, 0.1);
        let a = simulate_seeded(&m, 500, 7).unwrap();
        let b = simulate_seeded(&m, 500, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seed(), Some(7));
        let c = simulate_seeded(&m, 500, 8).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn skeleton_examples() {
        let m = ar1(0.5, 1.0, 0.3);
        assert_eq!(skeleton(&m, 3).unwrap().values(), &[1.0, 0.5, 0.25, 0.125]);
        let sq = RecursionModel::new(TransitionMap::affine(|z| z[0] * z[0], |_| 1.0), vec![0.5], NoiseModel::Gaussian01, 0.1).unwrap();
        assert_eq!(skeleton(&sq, 2).unwrap().values(), &[0.5, 0.25, 0.0625]);
        assert_eq!(skeleton(&sq, 0).unwrap().values(), &[0.5]);
    }

    #[test]
    fn divergence_and_gain_errors() {
        let blow = RecursionModel::new(TransitionMap::general(|z, y| z[0] * 1e200 + y), vec![1e200], NoiseModel::Gaussian01, 0.1).unwrap();
        assert_eq!(
            skeleton(&blow, 3).unwrap_err(),
            RecursionError::Divergence { step: 1, value: f64::INFINITY }
        );
        assert!(matches!(simulate_seeded(&blow, 3, 1), Err(RecursionError::Divergence { step: 1, .. })));
        let neg = RecursionModel::new(TransitionMap::affine(|z| z[0], |z| z[0] - 1.0), vec![0.5], NoiseModel::Gaussian01, 0.1).unwrap();
        assert!(matches!(simulate_seeded(&neg, 3, 1), Err(RecursionError::NegativeGain { step: 1, .. })));
    }

    #[test]
    fn replay_reproduces_values() {
        let m = RecursionModel::new(
            TransitionMap::general(|z, y| (z[0] + 0.3 * z[1]).sin() + y * (1.0 + z[0] * z[0])),
            vec![0.1, -0.2],
            NoiseModel::SkellamUnit,
            0.2,
        )
        .unwrap();
        let t = simulate_seeded(&m, 200, 5).unwrap();
        assert!(t.reproduces(&m));
        let r = replay(&m, t.noise_draws().unwrap()).unwrap();
        assert_eq!(r.values(), t.values());
    }

    #[test]
    fn paths_approach_skeleton_as_noise_shrinks() {
        let base = skeleton(&ar1(0.5, 1.0, 0.0), 50).unwrap();
        let mut medians = Vec::new();
        for &eps in &[0.4, 0.2, 0.1, 0.05] {
            let m = ar1(0.5, 1.0, eps);
            let mut devs: Vec<f64> = (0..100)
                .map(|seed| {
                    let t = simulate_seeded(&m, 50, seed).unwrap();
                    t.values()
                        .iter()
                        .zip(base.values())
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .collect();
            devs.sort_by(f64::total_cmp);
            medians.push(0.5 * (devs[49] + devs[50]));
        }
        assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
    }
}
