use super::ActionError;
use crate::noise::RateProfile;
use crate::recursion::Trajectory;

/// Leaving `(-level, level)` within `horizon` steps for `X_k = a X_{k-1} + ε ξ_k`, `X_0 = 0`.
#[derive(Debug, Clone)]
pub struct ExitProblem {
    pub a: f64,
    pub horizon: usize,
    pub level: f64,
    pub rate: RateProfile,
}

impl ExitProblem {
    pub fn new(a: f64, horizon: usize, level: f64, rate: RateProfile) -> Result<Self, ActionError> {
        if horizon < 1 {
            return Err(ActionError::InvalidProblem("horizon must be at least 1".into()));
        }
        if !(level > 0.0 && level.is_finite()) {
            return Err(ActionError::InvalidProblem(format!("level {level} must be positive")));
        }
        if !a.is_finite() {
            return Err(ActionError::InvalidProblem(format!("coefficient {a} must be finite")));
        }
        Ok(ExitProblem { a, horizon, level, rate })
    }

    /// Unit level, Gaussian rate.
    pub fn gaussian(a: f64, horizon: usize) -> Result<Self, ActionError> {
        Self::new(a, horizon, 1.0, RateProfile::gaussian())
    }

    /// `Σ_{k=0}^{M-1} a^{2k}`, summed term by term.
    pub fn energy(&self) -> f64 {
        let a2 = self.a * self.a;
        let mut term = 1.0;
        let mut sum = 0.0;
        for _ in 0..self.horizon {
            sum += term;
            term *= a2;
        }
        sum
    }
}

/// Minimal action `level² / (2 Σ_{k=0}^{M-1} a^{2k})` over paths exiting by step `M`.
pub fn exit_action_closed_form(problem: &ExitProblem) -> Result<f64, ActionError> {
    if !problem.rate.is_gaussian() {
        return Err(ActionError::RequiresGaussianRate);
    }
    Ok(problem.level * problem.level / (2.0 * problem.energy()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalExitPath {
    pub path: Trajectory,
    /// `w_1, ..., w_M` with `w_k = K a^{M-k}`.
    pub noise: Vec<f64>,
}

/// The minimizing path: noise `w_k = K a^{M-k}` with `K = level / Σ_j a^{2j}`,
/// driven from `u_0 = 0`, reaches `u_M = level`.
pub fn optimal_exit_path(problem: &ExitProblem) -> Result<OptimalExitPath, ActionError> {
    if !problem.rate.is_gaussian() {
        return Err(ActionError::RequiresGaussianRate);
    }
    let m = problem.horizon;
    let k = problem.level / problem.energy();
    let noise: Vec<f64> = (1..=m).map(|j| k * problem.a.powi((m - j) as i32)).collect();
    let mut values = Vec::with_capacity(m + 1);
    values.push(0.0);
    let mut u = 0.0;
    for w in &noise {
        u = problem.a * u + w;
        values.push(u);
    }
    Ok(OptimalExitPath {
        path: Trajectory::new(values, 1, 0.0, None, None),
        noise,
    })
}
