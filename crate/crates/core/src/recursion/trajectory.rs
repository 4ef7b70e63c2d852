use std::io;

use super::{replay, RecursionError, RecursionModel};

/// A finite path `u_0, ..., u_N`. When present, `noise_draws[i]` is the `ξ`
/// that produced `values[m + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    values: Vec<f64>,
    memory: usize,
    eps: f64,
    pub(crate) seed: Option<u64>,
    noise_draws: Option<Vec<f64>>,
}

impl Trajectory {
    /// # Panics
    /// When `values` is shorter than `memory` or `memory` is zero, or when the number of
    /// draws does not match the number of generated values.
    pub fn new(values: Vec<f64>, memory: usize, eps: f64, seed: Option<u64>, noise_draws: Option<Vec<f64>>) -> Self {
        assert!(memory >= 1 && values.len() >= memory, "trajectory shorter than its initial segment");
        if let Some(d) = &noise_draws {
            assert_eq!(d.len(), values.len() - memory, "one noise draw per generated value");
        }
        Trajectory {
            values,
            memory,
            eps,
            seed,
            noise_draws,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn noise_draws(&self) -> Option<&[f64]> {
        self.noise_draws.as_deref()
    }

    /// True when re-applying the map to the recorded draws gives the same values bit for bit.
    pub fn reproduces(&self, model: &RecursionModel) -> bool {
        match &self.noise_draws {
            Some(d) => replay(model, d).map(|t| t.values == self.values).unwrap_or(false),
            None => false,
        }
    }

    pub fn replay(&self, model: &RecursionModel) -> Result<Trajectory, RecursionError> {
        let draws = self
            .noise_draws
            .as_deref()
            .ok_or_else(|| RecursionError::Usage("trajectory has no recorded noise".into()))?;
        replay(model, draws)
    }

    /// Columns `k, u_k, xi_k`; `xi_k` is empty on the initial segment.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "u_k", "xi_k"])?;
        for (k, u) in self.values.iter().enumerate() {
            let xi = match (&self.noise_draws, k.checked_sub(self.memory)) {
                (Some(d), Some(i)) => d[i].to_string(),
                _ => String::new(),
            };
            w.write_record([k.to_string(), u.to_string(), xi])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseModel;
    use crate::recursion::simulate_seeded;

    #[test]
    fn csv_layout() {
        let t = Trajectory::new(vec![0.0, 1.5, 0.25], 1, 0.5, None, Some(vec![3.0, -1.0]));
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,u_k,xi_k\n0,0,\n1,1.5,3\n2,0.25,-1\n");
    }

    #[test]
    fn csv_round_trips_values_exactly() {
        let m = RecursionModel::ar1(0.7, 0.0, NoiseModel::Gaussian01, 0.3).unwrap();
        let t = simulate_seeded(&m, 40, 1).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        let parsed: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
        assert_eq!(parsed, t.values());
    }

    #[test]
    fn without_draws_nothing_to_replay() {
        let m = RecursionModel::ar1(0.7, 0.0, NoiseModel::Gaussian01, 0.3).unwrap();
        let t = Trajectory::new(vec![0.0, 1.0], 1, 0.3, None, None);
        assert!(!t.reproduces(&m));
        assert!(t.replay(&m).is_err());
    }
}
