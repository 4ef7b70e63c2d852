//! Numeric diagnostics for the tilt conditions: along `ε ↓ 0`, the sequence
//! `(q(ε)/ε)|t_v^ε|` should stay bounded and `ε² H''(t_v^ε)` should vanish,
//! where `t_v^ε` solves `H'(t) = v/ε`.

use std::io;

use super::{scaled_rate, ConjugateSolver, NoiseError, NoiseModel, RateProfile};

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionRow {
    pub v: f64,
    pub eps: f64,
    /// `None` when the tilt is unattainable (`I(v) = ∞` rows).
    pub q_over_eps_abs_t: Option<f64>,
    pub eps2_h2: Option<f64>,
    pub rate_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSummary {
    pub v: f64,
    pub speed_bounded: bool,
    pub curvature_decays: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionsReport {
    pub rows: Vec<ConditionRow>,
    pub summaries: Vec<ConditionSummary>,
}

/// Growth factor across the grid above which `(q/ε)|t|` is flagged unbounded.
const GROWTH_LIMIT: f64 = 2.0;

impl ConditionsReport {
    pub fn all_ok(&self) -> bool {
        self.summaries.iter().all(|s| s.speed_bounded && s.curvature_decays)
    }

    /// Rows for one `v`, in the order of the supplied `ε` grid.
    pub fn rows_for(&self, v: f64) -> impl Iterator<Item = &ConditionRow> {
        self.rows.iter().filter(move |r| r.v == v)
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["v", "eps", "q_over_eps_abs_t", "eps2_h2", "rate_value"])?;
        let opt = |x: Option<f64>| x.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.v.to_string(),
                r.eps.to_string(),
                opt(r.q_over_eps_abs_t),
                opt(r.eps2_h2),
                r.rate_value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Diagnostics using the model's known rate profile.
pub fn check_conditions(model: &NoiseModel, eps_grid: &[f64], v_grid: &[f64]) -> Result<ConditionsReport, NoiseError> {
    let profile = scaled_rate(model)?;
    Ok(check_conditions_with(model, &profile, eps_grid, v_grid, &ConjugateSolver::default()))
}

pub fn check_conditions_with(
    model: &NoiseModel,
    profile: &RateProfile,
    eps_grid: &[f64],
    v_grid: &[f64],
    solver: &ConjugateSolver,
) -> ConditionsReport {
    let mut rows = Vec::with_capacity(eps_grid.len() * v_grid.len());
    let mut summaries = Vec::with_capacity(v_grid.len());
    for &v in v_grid {
        let rate_value = profile.rate(v);
        let first = rows.len();
        for &eps in eps_grid {
            let tilt = if rate_value.is_finite() {
                solver.tilt(model, v / eps).ok()
            } else {
                None
            };
            rows.push(match tilt {
                Some(sol) => ConditionRow {
                    v,
                    eps,
                    q_over_eps_abs_t: Some(profile.q(eps) / eps * sol.t_star.abs()),
                    eps2_h2: Some(eps * eps * sol.h2),
                    rate_value,
                },
                None => ConditionRow {
                    v,
                    eps,
                    q_over_eps_abs_t: None,
                    eps2_h2: None,
                    rate_value: f64::INFINITY,
                },
            });
        }
        summaries.push(summarize(v, &rows[first..]));
    }
    ConditionsReport { rows, summaries }
}

fn summarize(v: f64, rows: &[ConditionRow]) -> ConditionSummary {
    let mut finite: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((r.eps, r.q_over_eps_abs_t?, r.eps2_h2?)))
        .collect();
    if finite.is_empty() {
        // I(v) = ∞: nothing to check
        return ConditionSummary {
            v,
            speed_bounded: true,
            curvature_decays: true,
        };
    }
    // along ε ↓ 0
    finite.sort_by(|a, b| b.0.total_cmp(&a.0));
    let head = finite[0].1;
    let speed_bounded = finite
        .iter()
        .all(|r| r.1.is_finite() && r.1 <= GROWTH_LIMIT * head.max(f64::MIN_POSITIVE) + f64::EPSILON);
    let curvature_decays = finite.windows(2).all(|w| w[1].2 < w[0].2);
    ConditionSummary {
        v,
        speed_bounded,
        curvature_decays,
    }
}
