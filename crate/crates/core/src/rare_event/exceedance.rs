use rand::Rng;
use rand_distr::Distribution;

use super::{least_squares, EstimatorResult, Method, MonteCarlo, RareEventError};
use crate::action::min_energy_profile;
use crate::noise::{scaled_rate, tilt, TiltedSampler};
use crate::recursion::RecursionModel;

/// Hit times targeted by the importance-sampling mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HitTimes {
    /// Two components: the profiles reaching `±level` exactly at the horizon.
    /// Not log-efficient when an earlier hit time costs about as much.
    Horizon,
    /// `2 × horizon` components: profiles reaching `±level` at every step `τ ≤ horizon`,
    /// untilted after `τ`.
    #[default]
    All,
}

/// Options for [`tilted_is_exceedance_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsOptions {
    /// Multiplies the optimal noise profile; `0` switches the tilt off.
    pub profile_scale: f64,
    pub hit_times: HitTimes,
}

impl Default for IsOptions {
    fn default() -> Self {
        IsOptions {
            profile_scale: 1.0,
            hit_times: HitTimes::All,
        }
    }
}

struct TiltStep {
    t: f64,
    h: f64,
    sampler: TiltedSampler,
}

/// Equal-weight mixture of per-step tilts; every component has one step per horizon step.
struct Proposal {
    components: Vec<Vec<TiltStep>>,
}

#[derive(Default)]
struct Partial {
    sum_w: f64,
    sum_w2: f64,
    hits: u64,
}

fn check_args(horizon: usize, level: f64, n: u64) -> Result<(), RareEventError> {
    if n == 0 {
        return Err(RareEventError::Usage("n must be at least 1".into()));
    }
    if horizon == 0 {
        return Err(RareEventError::Usage("horizon must be at least 1".into()));
    }
    if !(level >= 0.0 && level.is_finite()) {
        return Err(RareEventError::Usage(format!("level {level} must be finite and nonnegative")));
    }
    Ok(())
}

/// Fraction of `n` trajectories with `max_{1 ≤ k ≤ horizon} |X_k| ≥ level`
/// (steps counted after the initial segment), with the binomial standard error.
pub fn crude_mc_exceedance(model: &RecursionModel, horizon: usize, level: f64, n: u64, mc: &MonteCarlo) -> Result<EstimatorResult, RareEventError> {
    check_args(horizon, level, n)?;
    estimate(model, horizon, level, n, mc, None, Method::Crude)
}

/// Importance sampling under per-step tilted noise along minimum-energy exit
/// profiles, mixed over both signs (and by default every hit time) with
/// balance-heuristic weights.
///
/// Needs a linear map (`ScalarAr1` or `LinearAr`) and `ε > 0`.
pub fn tilted_is_exceedance(model: &RecursionModel, horizon: usize, level: f64, n: u64, mc: &MonteCarlo) -> Result<EstimatorResult, RareEventError> {
    tilted_is_exceedance_with(model, horizon, level, n, mc, &IsOptions::default())
}

pub fn tilted_is_exceedance_with(
    model: &RecursionModel,
    horizon: usize,
    level: f64,
    n: u64,
    mc: &MonteCarlo,
    opts: &IsOptions,
) -> Result<EstimatorResult, RareEventError> {
    check_args(horizon, level, n)?;
    let proposal = build_proposal(model, horizon, level, opts)?;
    estimate(model, horizon, level, n, mc, proposal.as_ref(), Method::Tilted)
}

fn build_proposal(model: &RecursionModel, horizon: usize, level: f64, opts: &IsOptions) -> Result<Option<Proposal>, RareEventError> {
    let coeffs = model
        .map()
        .linear_coefficients()
        .ok_or_else(|| RareEventError::Usage("tilted sampling needs a linear map with additive noise".into()))?;
    let eps = model.eps();
    if !(eps > 0.0) {
        return Err(RareEventError::Usage("tilted sampling needs a positive noise scale".into()));
    }
    let scale = opts.profile_scale;
    if !scale.is_finite() {
        return Err(RareEventError::Usage(format!("profile scale {scale} must be finite")));
    }
    let hits = match opts.hit_times {
        HitTimes::Horizon => horizon..=horizon,
        HitTimes::All => 1..=horizon,
    };
    let mut profiles = Vec::new();
    for tau in hits {
        for target in [level, -level] {
            let mut w: Vec<f64> = min_energy_profile(&coeffs, model.initial(), tau, target)
                .into_iter()
                .map(|w| scale * w)
                .collect();
            w.resize(horizon, 0.0);
            profiles.push(w);
        }
    }
    if profiles.iter().flatten().all(|&w| w == 0.0) {
        return Ok(None);
    }
    let steps = |w: Vec<f64>| -> Result<Vec<TiltStep>, RareEventError> {
        w.into_iter()
            .enumerate()
            .map(|(k, wk)| {
                let mean = wk / eps;
                let (t, h) = if mean == 0.0 {
                    (0.0, 0.0)
                } else {
                    let s = tilt(model.noise(), mean).map_err(|_| RareEventError::UnattainableTilt {
                        step: model.memory() + k,
                        mean,
                    })?;
                    (s.t_star, s.h)
                };
                Ok(TiltStep {
                    t,
                    h,
                    sampler: model.noise().tilted_sampler(t)?,
                })
            })
            .collect()
    };
    Ok(Some(Proposal {
        components: profiles.into_iter().map(steps).collect::<Result<_, _>>()?,
    }))
}

fn estimate(
    model: &RecursionModel,
    horizon: usize,
    level: f64,
    n: u64,
    mc: &MonteCarlo,
    proposal: Option<&Proposal>,
    method: Method,
) -> Result<EstimatorResult, RareEventError> {
    let base = model.noise().tilted_sampler(0.0)?;
    let parts = mc.map_batches(n, |first, count, rng| {
        let mut part = Partial::default();
        for run in first..first + count {
            let w = one_run(model, horizon, level, &base, proposal, rng).map_err(|source| RareEventError::Simulation { run, source })?;
            if w > 0.0 {
                part.hits += 1;
                part.sum_w += w;
                part.sum_w2 += w * w;
            }
        }
        Ok::<_, RareEventError>(part)
    })?;
    let (mut sum_w, mut sum_w2, mut hits) = (0.0, 0.0, 0);
    for p in parts {
        sum_w += p.sum_w;
        sum_w2 += p.sum_w2;
        hits += p.hits;
    }
    let nf = n as f64;
    let mean = sum_w / nf;
    let var = (sum_w2 / nf - mean * mean).max(0.0);
    let p_hat = mean.clamp(0.0, 1.0);
    let log_p = (p_hat > 0.0).then(|| p_hat.ln());
    let q = scaled_rate(model.noise()).ok().map(|r| r.q(model.eps())).filter(|q| q.is_finite());
    Ok(EstimatorResult {
        p_hat,
        std_err: (var / nf).sqrt(),
        n,
        log_p,
        scaled_log_p: log_p.zip(q).map(|(l, q)| q * l),
        eps: model.eps(),
        method,
        ess: match method {
            Method::Tilted if sum_w2 > 0.0 => Some(sum_w * sum_w / sum_w2),
            _ => None,
        },
        seed: mc.seed,
        hits,
    })
}

/// Indicator times likelihood ratio for one trajectory; the ratio accrues over
/// realized steps only.
fn one_run<R: Rng + ?Sized>(
    model: &RecursionModel,
    horizon: usize,
    level: f64,
    base: &TiltedSampler,
    proposal: Option<&Proposal>,
    rng: &mut R,
) -> Result<f64, crate::recursion::RecursionError> {
    let mut stepper = model.stepper();
    let Some(p) = proposal else {
        for _ in 0..horizon {
            if stepper.step(base.sample(rng))?.abs() >= level {
                return Ok(1.0);
            }
        }
        return Ok(0.0);
    };
    let c = p.components.len();
    let aim = &p.components[rng.random_range(0..c)];
    let mut log_ratio = vec![0.0; c];
    for k in 0..horizon {
        let xi = aim[k].sampler.sample(rng);
        for (l, comp) in log_ratio.iter_mut().zip(&p.components) {
            *l += comp[k].t * xi - comp[k].h;
        }
        if stepper.step(xi)?.abs() >= level {
            // 1 / (mean_c e^{l_c})
            let mx = log_ratio.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(l));
            let lse = mx + log_ratio.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
            return Ok(((c as f64).ln() - lse).exp());
        }
    }
    Ok(0.0)
}

/// Tilted estimates across a decreasing ε grid and the affine extrapolation of
/// `q(ε) log p̂` to `ε = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSweep {
    pub results: Vec<EstimatorResult>,
    /// Intercept of the fit, `None` when fewer than two usable points remain.
    pub extrapolated: Option<f64>,
    pub slope: Option<f64>,
    /// ε values used in the fit and their residuals.
    pub fit_eps: Vec<f64>,
    pub residuals: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Runs [`tilted_is_exceedance`] at each ε (grid point `i` on seed
/// `mc.derive(i)`) and fits `q(ε) log p̂ ≈ c + s ε` by least squares on the last
/// three usable points. Zero-hit points are left out with a warning.
pub fn rate_sweep(
    model: &RecursionModel,
    horizon: usize,
    level: f64,
    eps_grid: &[f64],
    n: u64,
    mc: &MonteCarlo,
) -> Result<RateSweep, RareEventError> {
    if eps_grid.len() < 3 {
        return Err(RareEventError::Usage("eps grid needs at least three points".into()));
    }
    if eps_grid.windows(2).any(|w| !(w[1] < w[0])) || eps_grid.iter().any(|&e| !(e > 0.0)) {
        return Err(RareEventError::Usage("eps grid must be positive and strictly decreasing".into()));
    }
    let mut results = Vec::with_capacity(eps_grid.len());
    let mut warnings = Vec::new();
    for (i, &eps) in eps_grid.iter().enumerate() {
        let m = model.with_eps(eps)?;
        let r = tilted_is_exceedance(&m, horizon, level, n, &mc.derive(i as u64))?;
        if r.scaled_log_p.is_none() {
            warnings.push(format!("eps = {eps}: no hits in {n} runs, excluded from the fit"));
        }
        results.push(r);
    }
    let usable: Vec<(f64, f64)> = results.iter().filter_map(|r| r.scaled_log_p.map(|s| (r.eps, s))).collect();
    let tail = &usable[usable.len().saturating_sub(3)..];
    let x: Vec<f64> = tail.iter().map(|p| p.0).collect();
    let y: Vec<f64> = tail.iter().map(|p| p.1).collect();
    let fit = least_squares(&x, &y);
    if fit.is_none() {
        warnings.push("fewer than two usable points; no extrapolation".into());
    }
    let residuals = fit
        .map(|(s, c)| x.iter().zip(&y).map(|(xi, yi)| yi - (c + s * xi)).collect())
        .unwrap_or_default();
    Ok(RateSweep {
        results,
        extrapolated: fit.map(|f| f.1),
        slope: fit.map(|f| f.0),
        fit_eps: x,
        residuals,
        warnings,
    })
}
