use std::io;

use rand::Rng;
use rayon::prelude::*;

use super::{least_squares, MonteCarlo, RareEventError};
use crate::recursion::{check_exit_args, exit_index, RecursionModel};

/// Censoring fraction above which an ε is flagged and left out of the fit.
pub const CENSORING_LIMIT: f64 = 0.01;
const BOOTSTRAP_TAG: u64 = u64::MAX;

/// Mean exit times over an ε grid and the fit `log E τ ≈ c + s ε^{-2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitTimeResult {
    pub eps_grid: Vec<f64>,
    pub n: u64,
    pub cap: u64,
    /// Exit times count steps after the initial segment; censored runs count as `cap`.
    pub mean_tau: Vec<f64>,
    pub std_err: Vec<f64>,
    pub censored_counts: Vec<u64>,
    /// Censoring fraction above [`CENSORING_LIMIT`].
    pub unreliable: Vec<bool>,
    /// Fitted over the reliable points only; `None` with fewer than two.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Percentile interval (2.5%, 97.5%) from resampling runs within each ε.
    pub slope_ci: Option<(f64, f64)>,
    pub resamples: usize,
    pub seed: u64,
}

impl ExitTimeResult {
    pub fn any_unreliable(&self) -> bool {
        self.unreliable.iter().any(|&u| u)
    }

    /// Columns `eps, n, mean_tau, censored, log_mean_tau`.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["eps", "n", "mean_tau", "censored", "log_mean_tau"])?;
        for i in 0..self.eps_grid.len() {
            w.write_record([
                self.eps_grid[i].to_string(),
                self.n.to_string(),
                self.mean_tau[i].to_string(),
                self.censored_counts[i].to_string(),
                self.mean_tau[i].ln().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// [`exit_time_mc_with`] with 1000 bootstrap resamples.
pub fn exit_time_mc(model: &RecursionModel, level: f64, eps_grid: &[f64], n: u64, cap: u64, mc: &MonteCarlo) -> Result<ExitTimeResult, RareEventError> {
    exit_time_mc_with(model, level, eps_grid, n, cap, 1000, mc)
}

/// Simulates `n` exit times from `(-level, level)` per ε (grid point `i` on seed
/// `mc.derive(i)`) and regresses `log(mean τ)` on `ε^{-2}`.
pub fn exit_time_mc_with(
    model: &RecursionModel,
    level: f64,
    eps_grid: &[f64],
    n: u64,
    cap: u64,
    resamples: usize,
    mc: &MonteCarlo,
) -> Result<ExitTimeResult, RareEventError> {
    if eps_grid.is_empty() || eps_grid.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(RareEventError::Usage("eps grid must be nonempty and positive".into()));
    }
    if n == 0 {
        return Err(RareEventError::Usage("n must be at least 1".into()));
    }
    let cap_steps = usize::try_from(cap).map_err(|_| RareEventError::Usage(format!("cap {cap} too large")))?;
    check_exit_args(model, level, cap_steps)?;

    let mut samples = Vec::with_capacity(eps_grid.len());
    for (i, &eps) in eps_grid.iter().enumerate() {
        samples.push(exit_times(&model.with_eps(eps)?, level, n, cap_steps, &mc.derive(i as u64))?);
    }

    let nf = n as f64;
    let mut mean_tau = Vec::new();
    let mut std_err = Vec::new();
    let mut censored_counts = Vec::new();
    let mut unreliable = Vec::new();
    for (taus, censored) in &samples {
        let mean = taus.iter().map(|&t| t as f64).sum::<f64>() / nf;
        let var = if n > 1 {
            taus.iter().map(|&t| (t as f64 - mean).powi(2)).sum::<f64>() / (nf - 1.0)
        } else {
            0.0
        };
        mean_tau.push(mean);
        std_err.push((var / nf).sqrt());
        censored_counts.push(*censored);
        unreliable.push(*censored as f64 / nf > CENSORING_LIMIT);
    }

    let reliable: Vec<usize> = (0..eps_grid.len()).filter(|&i| !unreliable[i]).collect();
    let x: Vec<f64> = reliable.iter().map(|&i| eps_grid[i].powi(-2)).collect();
    let y: Vec<f64> = reliable.iter().map(|&i| mean_tau[i].ln()).collect();
    let fit = least_squares(&x, &y);

    let slope_ci = match fit {
        Some(_) if resamples > 0 => {
            let boot = mc.derive(BOOTSTRAP_TAG);
            let mut slopes: Vec<f64> = boot.pool().install(|| {
                (0..resamples as u64)
                    .into_par_iter()
                    .filter_map(|b| {
                        let mut rng = boot.stream(b);
                        let yb: Vec<f64> = reliable
                            .iter()
                            .map(|&i| {
                                let taus = &samples[i].0;
                                let sum: u64 = (0..taus.len()).map(|_| taus[rng.random_range(0..taus.len())]).sum();
                                (sum as f64 / nf).ln()
                            })
                            .collect();
                        least_squares(&x, &yb).map(|f| f.0)
                    })
                    .collect()
            });
            slopes.sort_by(f64::total_cmp);
            percentile_interval(&slopes)
        }
        _ => None,
    };

    Ok(ExitTimeResult {
        eps_grid: eps_grid.to_vec(),
        n,
        cap,
        mean_tau,
        std_err,
        censored_counts,
        unreliable,
        slope: fit.map(|f| f.0),
        intercept: fit.map(|f| f.1),
        slope_ci,
        resamples,
        seed: mc.seed,
    })
}

fn percentile_interval(sorted: &[f64]) -> Option<(f64, f64)> {
    if sorted.is_empty() {
        return None;
    }
    let at = |q: f64| sorted[((q * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1)];
    Some((at(0.025), at(0.975)))
}

/// Exit times (in steps) of `n` runs, censored runs at `cap`, and the censored count.
pub(crate) fn exit_times(model: &RecursionModel, level: f64, n: u64, cap: usize, mc: &MonteCarlo) -> Result<(Vec<u64>, u64), RareEventError> {
    let sampler = model.noise().tilted_sampler(0.0)?;
    let m = model.memory();
    let parts = mc.map_batches(n, |first, count, rng| {
        let mut taus = Vec::with_capacity(count as usize);
        let mut censored = 0;
        for run in first..first + count {
            match exit_index(model, &sampler, level, cap, rng).map_err(|source| RareEventError::Simulation { run, source })? {
                Some(k) => taus.push((k - m + 1) as u64),
                None => {
                    taus.push(cap as u64);
                    censored += 1;
                }
            }
        }
        Ok::<_, RareEventError>((taus, censored))
    })?;
    let mut taus = Vec::with_capacity(n as usize);
    let mut censored = 0;
    for (t, c) in parts {
        taus.extend(t);
        censored += c;
    }
    Ok((taus, censored))
}
