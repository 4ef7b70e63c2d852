use super::{RecursionError, Trajectory};

/// Enclosure of `ρ(x, y) = Σ_{j ≥ m} 2^{-j} |x_j - y_j| / (1 + |x_j - y_j|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Sums the terms `j = m..=n_trunc`; every omitted term is below `2^{-j}`, so the
/// tail adds less than `2^{-n_trunc}`. Both paths need entries up to index `n_trunc`.
pub fn rho_distance(x: &Trajectory, y: &Trajectory, n_trunc: usize) -> Result<RhoBounds, RecursionError> {
    if x.memory() != y.memory() {
        return Err(RecursionError::Usage(format!(
            "memory depths differ: {} vs {}",
            x.memory(),
            y.memory()
        )));
    }
    if x.len() <= n_trunc || y.len() <= n_trunc {
        return Err(RecursionError::Usage(format!(
            "paths of length {} and {} do not reach index {n_trunc}",
            x.len(),
            y.len()
        )));
    }
    let lower: f64 = (x.memory()..=n_trunc)
        .map(|j| {
            let d = (x.values()[j] - y.values()[j]).abs();
            0.5f64.powi(j as i32) * d / (1.0 + d)
        })
        .sum();
    Ok(RhoBounds {
        lower,
        upper: lower + 0.5f64.powi(n_trunc as i32),
    })
}
