use std::io;

use super::exit_time::exit_times;
use super::{crude_mc_exceedance, MonteCarlo, RareEventError};
use crate::recursion::RecursionModel;

/// Violations are counted above this many standard errors.
pub const Z_LIMIT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalRow {
    pub j: usize,
    /// `P̂(τ > M j)`
    pub survival: f64,
    /// `(1 - p̂_M)^j`
    pub bound: f64,
    /// `(survival - bound) / σ`, `0` when both are exact.
    pub z_score: f64,
}

impl SurvivalRow {
    pub fn violates(&self) -> bool {
        self.z_score > Z_LIMIT
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalTable {
    pub block: usize,
    /// Rows `j = 0..=n_blocks`.
    pub rows: Vec<SurvivalRow>,
    /// One-block exceedance probability from the origin.
    pub p_block: f64,
    pub p_block_se: f64,
    pub n: u64,
    pub seed: u64,
}

impl SurvivalTable {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.violates()).count()
    }

    /// Columns `j, survival, bound, z_score`.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["j", "survival", "bound", "z_score"])?;
        for r in &self.rows {
            w.write_record([r.j.to_string(), r.survival.to_string(), r.bound.to_string(), r.z_score.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Empirical survival `P̂(τ > M j)` for `j = 0..=n_blocks` against the block bound
/// `(1 - p̂_M)^j`, where `p̂_M` is the crude estimate of leaving `(-level, level)`
/// within one block when started from the origin.
///
/// Exit times use seed `mc.derive(0)`, the block probability `mc.derive(1)`; each
/// uses `n` runs. The z-score combines both standard errors (delta method for the
/// bound) and a row violates the bound when it exceeds [`Z_LIMIT`].
pub fn survival_vs_geometric(
    model: &RecursionModel,
    block: usize,
    n_blocks: usize,
    n: u64,
    level: f64,
    mc: &MonteCarlo,
) -> Result<SurvivalTable, RareEventError> {
    if block == 0 {
        return Err(RareEventError::Usage("block length must be at least 1".into()));
    }
    if n == 0 {
        return Err(RareEventError::Usage("n must be at least 1".into()));
    }
    // one step past the last block so that censored runs count as surviving it
    let cap = block
        .checked_mul(n_blocks)
        .and_then(|c| c.checked_add(1))
        .ok_or_else(|| RareEventError::Usage("block × n_blocks overflows".into()))?;
    let (taus, _) = exit_times(model, level, n, cap, &mc.derive(0))?;
    let origin = model.with_initial(vec![0.0; model.memory()])?;
    let p = crude_mc_exceedance(&origin, block, level, n, &mc.derive(1))?;

    let nf = n as f64;
    let var_p = p.std_err * p.std_err;
    let rows = (0..=n_blocks)
        .map(|j| {
            let horizon = (block * j) as u64;
            let alive = taus.iter().filter(|&&t| t > horizon).count() as f64;
            let survival = alive / nf;
            let bound = (1.0 - p.p_hat).powi(j as i32);
            let d_bound = if j == 0 {
                0.0
            } else {
                j as f64 * (1.0 - p.p_hat).powi(j as i32 - 1)
            };
            let var = survival * (1.0 - survival) / nf + d_bound * d_bound * var_p;
            let diff = survival - bound;
            let z_score = if var > 0.0 {
                diff / var.sqrt()
            } else if diff == 0.0 {
                0.0
            } else {
                diff.signum() * f64::INFINITY
            };
            SurvivalRow { j, survival, bound, z_score }
        })
        .collect();
    Ok(SurvivalTable {
        block,
        rows,
        p_block: p.p_hat,
        p_block_se: p.std_err,
        n,
        seed: mc.seed,
    })
}
