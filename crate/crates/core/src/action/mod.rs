//! The path action `J_N(u) = Σ_{k=m}^{N} inf { I(v) : u_k = f(u_{k-1}, ..., u_{k-m}, v) }`
//! on finite prefixes, with `J = ∞` off the initial segment or when a step has no
//! solving noise value.

mod exit;
mod minimize;

use thiserror::Error;

use crate::noise::RateProfile;
use crate::recursion::{linear_part, RecursionModel, StateWindow, TransitionMap};
use crate::roots::brent;

pub use exit::{exit_action_closed_form, optimal_exit_path, ExitProblem, OptimalExitPath};
pub(crate) use minimize::min_energy_profile;
pub use minimize::{minimize_exit_action, minimize_exit_action_with, write_exit_minima_csv, ExitMinimum, MinimizerConfig, TauResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActionError {
    #[error("invalid exit problem: {0}")]
    InvalidProblem(String),
    #[error("the closed form needs the Gaussian rate profile (q = ε², I = v²/2)")]
    RequiresGaussianRate,
}

/// Bracket and resolution for locating noise values `v` with `f(window, v) = u`
/// when the map has no closed-form inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootScan {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for RootScan {
    fn default() -> Self {
        RootScan {
            lo: -50.0,
            hi: 50.0,
            points: 10_000,
        }
    }
}

impl RootScan {
    /// All roots of `g` on the bracket: exact grid zeros plus one Brent refinement
    /// per sign change.
    fn roots<G: Fn(f64) -> f64>(&self, g: G) -> Vec<f64> {
        let n = self.points.max(2);
        let h = (self.hi - self.lo) / (n - 1) as f64;
        let mut roots = Vec::new();
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..n {
            let v = self.lo + h * i as f64;
            let gv = g(v);
            if !gv.is_finite() {
                prev = None;
                continue;
            }
            if gv == 0.0 {
                roots.push(v);
            } else if let Some((pv, pg)) = prev {
                if pg != 0.0 && pg.signum() != gv.signum() {
                    if let Some(r) = brent(&g, pv, v, 1e-15, 200) {
                        roots.push(r);
                    }
                }
            }
            prev = Some((v, gv));
        }
        roots
    }
}

/// Minimal cost of one transition and the noise value attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCost {
    pub cost: f64,
    pub noise: Option<f64>,
}

impl StepCost {
    const INFEASIBLE: StepCost = StepCost {
        cost: f64::INFINITY,
        noise: None,
    };

    fn at(v: f64, rate: &RateProfile) -> Self {
        StepCost {
            cost: rate.rate(v),
            noise: Some(v),
        }
    }
}

/// `inf { I(v) : u_next = f(window, v) }`, `∞` when no `v` solves it.
/// The window is ordered most recent first.
pub fn step_cost(model: &RecursionModel, window: &[f64], u_next: f64, rate: &RateProfile) -> f64 {
    step_cost_with(model, window, u_next, rate, &RootScan::default()).cost
}

pub fn step_cost_with(model: &RecursionModel, window: &[f64], u_next: f64, rate: &RateProfile, scan: &RootScan) -> StepCost {
    debug_assert_eq!(window.len(), model.memory());
    match model.map() {
        TransitionMap::ScalarAr1 { a } => StepCost::at(u_next - a * window[0], rate),
        TransitionMap::LinearAr { coeffs } => StepCost::at(u_next - linear_part(coeffs, window), rate),
        TransitionMap::AffineNoise { drift, gain } => {
            let (a, b) = (drift(window), gain(window));
            if b == 0.0 {
                // 0/0 = 0
                if u_next == a {
                    StepCost::at(0.0, rate)
                } else {
                    StepCost::INFEASIBLE
                }
            } else {
                StepCost::at((u_next - a) / b, rate)
            }
        }
        TransitionMap::General(f) => scan
            .roots(|v| f(window, v) - u_next)
            .into_iter()
            .map(|v| StepCost::at(v, rate))
            .filter(|s| !s.cost.is_nan())
            .min_by(|x, y| x.cost.total_cmp(&y.cost))
            .unwrap_or(StepCost::INFEASIBLE),
    }
}

/// `J_N` of a finite path, split per step `k = m..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCost {
    pub total: f64,
    pub per_step: Vec<f64>,
    /// Minimizing noise value per step (`NaN` where infeasible).
    pub noise: Vec<f64>,
    pub feasible: bool,
}

/// Action of `path` (entries `u_0..u_N`). The first `m` entries must equal the
/// model's initial segment exactly.
pub fn path_action(model: &RecursionModel, path: &[f64], rate: &RateProfile) -> PathCost {
    path_action_with(model, path, rate, &RootScan::default())
}

pub fn path_action_with(model: &RecursionModel, path: &[f64], rate: &RateProfile, scan: &RootScan) -> PathCost {
    let m = model.memory();
    if path.len() < m || path[..m] != *model.initial() {
        return PathCost {
            total: f64::INFINITY,
            per_step: Vec::new(),
            noise: Vec::new(),
            feasible: false,
        };
    }
    let mut window = StateWindow::new(&path[..m]);
    let mut per_step = Vec::with_capacity(path.len() - m);
    let mut noise = Vec::with_capacity(path.len() - m);
    for &u in &path[m..] {
        let s = step_cost_with(model, window.as_slice(), u, rate, scan);
        per_step.push(s.cost);
        noise.push(s.noise.unwrap_or(f64::NAN));
        window.push(u);
    }
    let feasible = per_step.iter().all(|c| c.is_finite());
    let total = if feasible { per_step.iter().sum() } else { f64::INFINITY };
    PathCost {
        total,
        per_step,
        noise,
        feasible,
    }
}
