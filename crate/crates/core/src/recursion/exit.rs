use rand::Rng;
use rand_distr::Distribution;

use super::{RecursionError, RecursionModel, Trajectory};
use crate::noise::TiltedSampler;

/// Which boundary counts as an exit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExitSet {
    /// `|u_k| >= level`
    #[default]
    Closed,
    /// `|u_k| > level`
    Open,
}

impl ExitSet {
    #[inline]
    pub fn exits(self, u: f64, level: f64) -> bool {
        match self {
            ExitSet::Closed => u.abs() >= level,
            ExitSet::Open => u.abs() > level,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitOutcome {
    /// Index `k` of the first exit, `None` when censored at the cap.
    pub exit_time: Option<usize>,
    /// Path up to the exit (or the cap).
    pub prefix: Trajectory,
}

impl ExitOutcome {
    pub fn is_censored(&self) -> bool {
        self.exit_time.is_none()
    }
}

/// First `k >= m` with `|u_k| >= level`, simulating at most `cap` steps.
pub fn simulate_exit<R: Rng + ?Sized>(model: &RecursionModel, level: f64, cap: usize, rng: &mut R) -> Result<ExitOutcome, RecursionError> {
    simulate_exit_with(model, level, cap, ExitSet::Closed, rng)
}

pub fn simulate_exit_with<R: Rng + ?Sized>(
    model: &RecursionModel,
    level: f64,
    cap: usize,
    set: ExitSet,
    rng: &mut R,
) -> Result<ExitOutcome, RecursionError> {
    check_exit_args(model, level, cap)?;
    let sampler = model.noise().tilted_sampler(0.0).expect("t = 0 is in the domain");
    let mut values = model.initial().to_vec();
    let mut draws = Vec::new();
    let mut stepper = model.stepper();
    let mut exit_time = None;
    for _ in 0..cap {
        let xi = sampler.sample(rng);
        let u = stepper.step(xi)?;
        values.push(u);
        draws.push(xi);
        if set.exits(u, level) {
            exit_time = Some(values.len() - 1);
            break;
        }
    }
    Ok(ExitOutcome {
        exit_time,
        prefix: Trajectory::new(values, model.memory(), model.eps(), None, Some(draws)),
    })
}

pub(crate) fn check_exit_args(model: &RecursionModel, level: f64, cap: usize) -> Result<(), RecursionError> {
    if !(level > 0.0) {
        return Err(RecursionError::Usage(format!("exit level {level} must be positive")));
    }
    if cap == 0 {
        return Err(RecursionError::Usage("cap must be at least 1".into()));
    }
    if let Some(x) = model.initial().iter().find(|x| x.abs() >= level) {
        return Err(RecursionError::Usage(format!("initial value {x} is already outside (-{level}, {level})")));
    }
    Ok(())
}

/// Exit index without keeping the path; `None` when censored.
pub(crate) fn exit_index<R: Rng + ?Sized>(
    model: &RecursionModel,
    sampler: &TiltedSampler,
    level: f64,
    cap: usize,
    rng: &mut R,
) -> Result<Option<usize>, RecursionError> {
    let mut stepper = model.stepper();
    for i in 0..cap {
        let u = stepper.step(sampler.sample(rng))?;
        if u.abs() >= level {
            return Ok(Some(model.memory() + i));
        }
    }
    Ok(None)
}
