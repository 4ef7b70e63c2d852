//! Numeric minimization of the exit action
//!
//! ```text
//! min over τ ≤ horizon, |u_τ| = level, |u_k| < level (k < τ) of J_τ(u)
//! ```
//!
//! Each hit time and each sign of the boundary point is a separate smooth problem
//! in the interior points `u_m, ..., u_{τ-1}`. Those are solved by BFGS with
//! finite-difference gradients from several starts; a candidate leaving the open
//! interval is rejected by the line search. A derivative-free coordinate sweep
//! takes over when BFGS stalls (non-smooth rate functions).

use std::io;

use rayon::prelude::*;

use super::{path_action_with, ActionError, RootScan};
use crate::noise::RateProfile;
use crate::recursion::{skeleton, RecursionModel, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizerConfig {
    pub max_iter: usize,
    /// Sup-norm of the gradient accepted as stationary.
    pub grad_tol: f64,
    pub polish_sweeps: usize,
    /// Relative gap under which two hit times count as tied (smaller τ wins).
    pub tie_tol: f64,
    pub scan: RootScan,
}

impl Default for MinimizerConfig {
    fn default() -> Self {
        MinimizerConfig {
            max_iter: 500,
            grad_tol: 1e-8,
            polish_sweeps: 200,
            tie_tol: 1e-12,
            scan: RootScan::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauResult {
    pub tau: usize,
    pub value: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitMinimum {
    pub value: f64,
    /// `u_0, ..., u_τ` with `|u_τ| = level`.
    pub path: Trajectory,
    pub hit_index: usize,
    /// Minimizing noise values for steps `m..=τ`.
    pub noise: Vec<f64>,
    pub converged: bool,
    /// Best value per hit time.
    pub per_tau: Vec<TauResult>,
}

struct Candidate {
    value: f64,
    interior: Vec<f64>,
    converged: bool,
}

pub fn minimize_exit_action(model: &RecursionModel, horizon: usize, level: f64, rate: &RateProfile) -> Result<ExitMinimum, ActionError> {
    minimize_exit_action_with(model, horizon, level, rate, &MinimizerConfig::default())
}

pub fn minimize_exit_action_with(
    model: &RecursionModel,
    horizon: usize,
    level: f64,
    rate: &RateProfile,
    cfg: &MinimizerConfig,
) -> Result<ExitMinimum, ActionError> {
    if horizon < 1 {
        return Err(ActionError::InvalidProblem("horizon must be at least 1".into()));
    }
    if !(level > 0.0 && level.is_finite()) {
        return Err(ActionError::InvalidProblem(format!("level {level} must be positive")));
    }
    if model.initial().iter().any(|x| x.abs() >= level) {
        return Err(ActionError::InvalidProblem("initial segment already outside the level".into()));
    }
    let m = model.memory();
    let skel = skeleton(model, horizon).map_err(|e| ActionError::InvalidProblem(e.to_string()))?;

    let mut best: Option<(usize, f64, Candidate)> = None;
    let mut per_tau = Vec::with_capacity(horizon);
    for steps in 1..=horizon {
        let tau = m + steps - 1;
        let mut tau_best: Option<(f64, Candidate)> = None;
        for sign in [1.0, -1.0] {
            let target = sign * level;
            let cand = solve_fixed_hit(model, &skel, steps, target, level, rate, cfg);
            // + wins ties, as for τ below
            if tau_best.as_ref().is_none_or(|(_, b)| cand.value < b.value - cfg.tie_tol * b.value.abs().max(1.0)) {
                tau_best = Some((target, cand));
            }
        }
        let (target, cand) = tau_best.expect("two signs tried");
        per_tau.push(TauResult {
            tau,
            value: cand.value,
            converged: cand.converged,
        });
        let better = match &best {
            None => true,
            Some((_, _, b)) => cand.value < b.value - cfg.tie_tol * b.value.abs().max(1.0),
        };
        if better {
            best = Some((tau, target, cand));
        }
    }

    let (tau, target, cand) = best.expect("horizon >= 1");
    let mut values = model.initial().to_vec();
    values.extend_from_slice(&cand.interior);
    values.push(target);
    let cost = path_action_with(model, &values, rate, &cfg.scan);
    Ok(ExitMinimum {
        value: cand.value,
        path: Trajectory::new(values, m, 0.0, None, None),
        hit_index: tau,
        noise: cost.noise,
        converged: cand.converged,
        per_tau,
    })
}

fn solve_fixed_hit(
    model: &RecursionModel,
    skel: &Trajectory,
    steps: usize,
    target: f64,
    level: f64,
    rate: &RateProfile,
    cfg: &MinimizerConfig,
) -> Candidate {
    let m = model.memory();
    let objective = |x: &[f64]| -> f64 {
        if x.iter().any(|u| !(u.abs() < level)) {
            return f64::INFINITY;
        }
        let mut path = Vec::with_capacity(m + x.len() + 1);
        path.extend_from_slice(model.initial());
        path.extend_from_slice(x);
        path.push(target);
        path_action_with(model, &path, rate, &cfg.scan).total
    };
    let n = steps - 1;
    if n == 0 {
        return Candidate {
            value: objective(&[]),
            interior: Vec::new(),
            converged: true,
        };
    }

    let starts = initial_guesses(model, skel, steps, target, level);
    let results: Vec<Candidate> = starts
        .par_iter()
        .map(|x0| {
            let (x, fx, ok) = bfgs(&objective, x0.clone(), cfg);
            if ok || !fx.is_finite() {
                return Candidate {
                    value: fx,
                    interior: x,
                    converged: ok,
                };
            }
            let (x, fx, ok) = coordinate_polish(&objective, x, fx, level, cfg.polish_sweeps);
            Candidate {
                value: fx,
                interior: x,
                converged: ok,
            }
        })
        .collect();
    // lowest value, ties by lowest start index
    results
        .into_iter()
        .reduce(|a, b| if b.value < a.value { b } else { a })
        .expect("at least one start")
}

/// Starts for the interior points `u_m..u_{τ-1}`: the minimum-energy linear
/// profile when the map is linear, the skeleton followed by a final jump, and a
/// straight ramp from the skeleton towards the target.
fn initial_guesses(model: &RecursionModel, skel: &Trajectory, steps: usize, target: f64, level: f64) -> Vec<Vec<f64>> {
    let m = model.memory();
    let n = steps - 1;
    let inside = (1.0 - 1e-9) * level;
    let clip = |x: f64| x.clamp(-inside, inside);
    let sk = &skel.values()[m..m + n];
    let mut starts = Vec::with_capacity(3);
    if let Some(coeffs) = model.map().linear_coefficients() {
        let w = min_energy_profile(&coeffs, model.initial(), steps, target);
        let path = drive_linear(&coeffs, model.initial(), &w);
        starts.push(path[m..m + n].iter().map(|&x| clip(x)).collect());
    }
    starts.push(sk.iter().map(|&x| clip(x)).collect());
    starts.push(
        sk.iter()
            .enumerate()
            .map(|(i, &s)| clip(s + (i + 1) as f64 / steps as f64 * (target - s)))
            .collect(),
    );
    starts
}

/// Impulse response `h_0..h_{n-1}` of `u_k = Σ a_i u_{k-i} + w_k`.
pub(crate) fn impulse_response(coeffs: &[f64], n: usize) -> Vec<f64> {
    let mut h = Vec::with_capacity(n);
    for j in 0..n {
        let v = if j == 0 {
            1.0
        } else {
            coeffs
                .iter()
                .enumerate()
                .filter(|(i, _)| *i < j)
                .map(|(i, a)| a * h[j - 1 - i])
                .sum()
        };
        h.push(v);
    }
    h
}

/// Runs the linear recursion on noise `w`, returning `initial ++ u`.
pub(crate) fn drive_linear(coeffs: &[f64], initial: &[f64], w: &[f64]) -> Vec<f64> {
    let mut path = initial.to_vec();
    for &wk in w {
        let k = path.len();
        let u: f64 = coeffs.iter().enumerate().map(|(i, a)| a * path[k - 1 - i]).sum::<f64>() + wk;
        path.push(u);
    }
    path
}

/// Minimum-energy noise `w_1..w_n` steering the linear recursion to `target` at step n:
/// `w_k ∝ h_{n-k}`, scaled to close the gap left by the zero-noise path.
pub(crate) fn min_energy_profile(coeffs: &[f64], initial: &[f64], steps: usize, target: f64) -> Vec<f64> {
    let h = impulse_response(coeffs, steps);
    let free = *drive_linear(coeffs, initial, &vec![0.0; steps]).last().expect("steps >= 1");
    let energy: f64 = h.iter().map(|x| x * x).sum();
    let k = (target - free) / energy;
    (1..=steps).map(|j| k * h[steps - j]).collect()
}

fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], fx: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 6e-6 * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let fp = f(&probe);
            probe[i] = x[i] - h;
            let fm = f(&probe);
            probe[i] = x[i];
            match (fp.is_finite(), fm.is_finite()) {
                (true, true) => (fp - fm) / (2.0 * h),
                (true, false) => (fp - fx) / h,
                (false, true) => (fx - fm) / h,
                (false, false) => 0.0,
            }
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// BFGS with an Armijo backtracking line search that rejects infeasible points.
fn bfgs<F: Fn(&[f64]) -> f64>(f: &F, mut x: Vec<f64>, cfg: &MinimizerConfig) -> (Vec<f64>, f64, bool) {
    let n = x.len();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return (x, fx, false);
    }
    let mut g = gradient(f, &x, fx);
    let identity = |n: usize| {
        let mut h = vec![vec![0.0; n]; n];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        h
    };
    let mut hinv = identity(n);
    for _ in 0..cfg.max_iter {
        if sup_norm(&g) <= cfg.grad_tol {
            return (x, fx, true);
        }
        let mut p: Vec<f64> = hinv.iter().map(|row| -dot(row, &g)).collect();
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            hinv = identity(n);
            p = g.iter().map(|v| -v).collect();
            slope = dot(&g, &p);
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-16 {
            let xn: Vec<f64> = x.iter().zip(&p).map(|(xi, pi)| xi + alpha * pi).collect();
            let fxn = f(&xn);
            if fxn.is_finite() && fxn <= fx + 1e-4 * alpha * slope {
                accepted = Some((xn, fxn));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            // no descent left at working precision
            return (x, fx, sup_norm(&g) <= 1e3 * cfg.grad_tol);
        };
        let gn = gradient(f, &xn, fxn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            let hy: Vec<f64> = hinv.iter().map(|row| dot(row, &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    hinv[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
        x = xn;
        fx = fxn;
        g = gn;
    }
    let ok = sup_norm(&g) <= cfg.grad_tol;
    (x, fx, ok)
}

/// Golden-section line minimization along each coordinate, with a shrinking radius.
fn coordinate_polish<F: Fn(&[f64]) -> f64>(f: &F, mut x: Vec<f64>, mut fx: f64, level: f64, sweeps: usize) -> (Vec<f64>, f64, bool) {
    let inside = (1.0 - 1e-12) * level;
    let mut radius = 0.5 * level;
    for _ in 0..sweeps {
        let before = fx;
        for i in 0..x.len() {
            let lo = (x[i] - radius).max(-inside);
            let hi = (x[i] + radius).min(inside);
            let mut probe = x.clone();
            let mut along = |t: f64| {
                probe[i] = t;
                f(&probe)
            };
            let (t, ft) = golden_section(&mut along, lo, hi, 80);
            if ft < fx {
                x[i] = t;
                fx = ft;
            }
        }
        let gain = before - fx;
        if gain <= 1e-14 * fx.abs().max(1.0) {
            if radius < 1e-10 * level {
                return (x, fx, true);
            }
            radius *= 0.25;
        }
    }
    (x, fx, false)
}

fn golden_section<F: FnMut(f64) -> f64>(f: &mut F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// One row per result: `tau, value, u_0..u_T, w_1..w_T, converged`, padded to the
/// longest hit index `T`. `w_k` is empty for steps inside the initial segment.
pub fn write_exit_minima_csv<W: io::Write>(writer: W, results: &[ExitMinimum]) -> csv::Result<()> {
    let t_max = results.iter().map(|r| r.hit_index).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["tau".to_string(), "value".to_string()];
    header.extend((0..=t_max).map(|k| format!("u_{k}")));
    header.extend((1..=t_max).map(|k| format!("w_{k}")));
    header.push("converged".into());
    w.write_record(&header)?;
    for r in results {
        let m = r.path.memory();
        let mut row = vec![r.hit_index.to_string(), r.value.to_string()];
        row.extend((0..=t_max).map(|k| r.path.values().get(k).map(|u| u.to_string()).unwrap_or_default()));
        row.extend((1..=t_max).map(|k| {
            k.checked_sub(m)
                .and_then(|i| r.noise.get(i))
                .map(|v| v.to_string())
                .unwrap_or_default()
        }));
        row.push(r.converged.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{exit_action_closed_form, ExitProblem};
    use crate::noise::NoiseModel;
    use crate::recursion::TransitionMap;

    fn ar1(a: f64) -> RecursionModel {
        RecursionModel::ar1(a, 0.0, NoiseModel::Gaussian01, 0.1).unwrap()
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
    }

    #[test]
    fn impulse_response_and_profile() {
        assert_eq!(impulse_response(&[0.5], 4), vec![1.0, 0.5, 0.25, 0.125]);
        assert_eq!(impulse_response(&[1.0, -0.5], 4), vec![1.0, 1.0, 0.5, 0.0]);
        let w = min_energy_profile(&[0.5], &[0.0], 3, 1.0);
        let k = 1.0 / 1.3125;
        for (x, e) in w.iter().zip([0.25 * k, 0.5 * k, k]) {
            assert!((x - e).abs() < 1e-15);
        }
        let w = min_energy_profile(&[0.3, 0.2], &[0.4, -0.1], 6, -1.0);
        let path = drive_linear(&[0.3, 0.2], &[0.4, -0.1], &w);
        assert!((path[7] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn matches_closed_form_with_decreasing_hit_cost() {
        let g = RateProfile::gaussian();
        let r = minimize_exit_action(&ar1(0.5), 5, 1.0, &g).unwrap();
        let cf = exit_action_closed_form(&ExitProblem::gaussian(0.5, 5).unwrap()).unwrap();
        assert!((r.value - cf).abs() <= 1e-6 * cf);
        assert_eq!(r.hit_index, 5);
        assert!(r.converged);
        assert!(r.per_tau.windows(2).all(|w| w[1].value < w[0].value));
    }

    #[test]
    fn independent_steps_jump_once() {
        let g = RateProfile::gaussian();
        for m in [1, 4, 8] {
            let r = minimize_exit_action(&ar1(0.0), m, 1.0, &g).unwrap();
            assert!((r.value - 0.5).abs() < 1e-12);
            assert_eq!(r.hit_index, 1);
            let jumps = r.noise.iter().filter(|w| w.abs() > 1e-9).count();
            assert_eq!(jumps, 1);
        }
    }

    #[test]
    fn brute_force_two_steps() {
        // grid over u_1 with u_2 = ±1; also τ = 1 directly
        let a = 0.5;
        let mut best = 0.5f64;
        for i in -10_000..=10_000 {
            let u1 = i as f64 * 1e-4;
            if u1.abs() >= 1.0 {
                continue;
            }
            for u2 in [1.0, -1.0] {
                let j = 0.5 * u1 * u1 + 0.5 * (u2 - a * u1) * (u2 - a * u1);
                best = best.min(j);
            }
        }
        let r = minimize_exit_action(&ar1(a), 2, 1.0, &RateProfile::gaussian()).unwrap();
        assert!((r.value - best).abs() < 1e-6, "{} vs {best}", r.value);
        let cf = exit_action_closed_form(&ExitProblem::gaussian(a, 2).unwrap()).unwrap();
        assert!((best - cf).abs() < 1e-6);
    }

    #[test]
    fn cold_starts_reach_the_optimum() {
        // skeleton and ramp starts alone, no analytic profile
        let a = 0.9;
        let general = RecursionModel::new(TransitionMap::general(move |z, y| a * z[0] + y), vec![0.0], NoiseModel::Gaussian01, 0.1).unwrap();
        let g = RateProfile::gaussian();
        let cfg = MinimizerConfig {
            scan: RootScan { lo: -5.0, hi: 5.0, points: 200 },
            ..MinimizerConfig::default()
        };
        let r = minimize_exit_action_with(&general, 6, 1.0, &g, &cfg).unwrap();
        let cf = exit_action_closed_form(&ExitProblem::gaussian(a, 6).unwrap()).unwrap();
        assert!((r.value - cf).abs() <= 1e-6 * cf, "{} vs {cf}", r.value);
        let shape: Vec<f64> = (1..=6).map(|k| a.powi(6 - k)).collect();
        assert!(cosine(&r.noise, &shape) >= 1.0 - 1e-6);
    }

    #[test]
    fn second_order_linear_model() {
        // interior plus boundary is a least-norm problem with the impulse response as direction
        let coeffs = vec![0.6, -0.3];
        let model = RecursionModel::new(TransitionMap::LinearAr { coeffs: coeffs.clone() }, vec![0.0, 0.0], NoiseModel::Gaussian01, 0.1).unwrap();
        let r = minimize_exit_action(&model, 4, 1.0, &RateProfile::gaussian()).unwrap();
        let h = impulse_response(&coeffs, 4);
        let energy: f64 = h.iter().map(|x| x * x).sum();
        assert!((r.value - 0.5 / energy).abs() < 1e-9, "{}", r.value);
        assert_eq!(r.hit_index, 5);
        assert_eq!(r.path.values().len(), 6);
    }

    #[test]
    fn nonsmooth_rate_is_handled() {
        // I = |v|, |a| < 1: cheapest is a single jump of size level at the last step
        let r = minimize_exit_action(&ar1(0.5), 3, 1.0, &RateProfile::skellam()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6, "{}", r.value);
    }

    #[test]
    fn invalid_inputs() {
        let g = RateProfile::gaussian();
        assert!(minimize_exit_action(&ar1(0.5), 0, 1.0, &g).is_err());
        assert!(minimize_exit_action(&ar1(0.5), 2, 0.0, &g).is_err());
        let outside = RecursionModel::ar1(0.5, 1.5, NoiseModel::Gaussian01, 0.1).unwrap();
        assert!(minimize_exit_action(&outside, 2, 1.0, &g).is_err());
    }

    #[test]
    fn csv_rows() {
        let g = RateProfile::gaussian();
        let a = minimize_exit_action(&ar1(0.0), 1, 1.0, &g).unwrap();
        let b = minimize_exit_action(&ar1(0.5), 2, 1.0, &g).unwrap();
        let mut buf = Vec::new();
        write_exit_minima_csv(&mut buf, &[a, b]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "tau,value,u_0,u_1,u_2,w_1,w_2,converged");
        assert_eq!(lines[1], "1,0.5,0,1,,1,,true");
        assert!(lines[2].starts_with("2,"));
        assert!(lines[2].ends_with(",true"));
    }
}
