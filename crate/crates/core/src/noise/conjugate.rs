//! Fenchel–Legendre transform `L(v) = sup_t [tv - H(t)]` and the tilt solving
//! `H'(t) = target`.
//!
//! `H` is convex, so `H'` is nondecreasing and the stationarity equation has a
//! bracketed root whenever `v` lies in the range of `H'`. The solver expands a
//! bracket from `t = 0` by doubling, then runs Newton steps on `H'(t) - v`,
//! falling back to bisection whenever a step leaves the bracket.

use super::{Cumulant, NoiseError, NoiseModel};

/// Tilt parameter `t*` with `H'(t*) = target`, plus `H`, `H'`, `H''` there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltSolution {
    pub t_star: f64,
    pub h: f64,
    pub h1: f64,
    pub h2: f64,
    pub converged: bool,
}

impl TiltSolution {
    fn at(t: f64, c: Cumulant, converged: bool) -> Self {
        TiltSolution {
            t_star: t,
            h: c.h,
            h1: c.h1,
            h2: c.h2.max(0.0),
            converged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugateSolver {
    /// Bracket bound on `|t|`. Beyond it, a target outside the open mean range
    /// whose residual is still bounded away from zero has `L = ∞`.
    pub bracket_cap: f64,
    /// Relative residual `|H'(t) - v| / max(1, |v|)` at which Newton stops.
    pub rel_tol: f64,
    /// Residual accepted as convergence (and as "touching" a saturated boundary).
    pub accept_tol: f64,
    pub max_iter: usize,
}

impl Default for ConjugateSolver {
    fn default() -> Self {
        ConjugateSolver {
            bracket_cap: 1e4,
            rel_tol: 1e-13,
            accept_tol: 1e-10,
            max_iter: 400,
        }
    }
}

enum Stationary {
    Root(TiltSolution),
    /// `H'` saturates before reaching the target.
    Saturated,
}

impl ConjugateSolver {
    /// Convex conjugate of `H` at `v`; `f64::INFINITY` when `v` is not reachable.
    pub fn legendre(&self, model: &NoiseModel, v: f64) -> f64 {
        if v.is_nan() {
            return f64::NAN;
        }
        if v.is_infinite() {
            return f64::INFINITY;
        }
        match self.stationary_point(model, v) {
            Ok(Stationary::Root(sol)) => {
                let value = sol.t_star * v - sol.h;
                if value.is_nan() {
                    f64::INFINITY
                } else {
                    value.max(0.0)
                }
            }
            Ok(Stationary::Saturated) | Err(_) => f64::INFINITY,
        }
    }

    /// Solves `H'(t) = target` for a target strictly inside the mean range.
    pub fn tilt(&self, model: &NoiseModel, target: f64) -> Result<TiltSolution, NoiseError> {
        let (lo, hi) = model.mean_range();
        let unattainable = NoiseError::UnattainableTilt { target, lo, hi };
        if !model.attains_mean(target) {
            return Err(unattainable);
        }
        match self.stationary_point(model, target)? {
            Stationary::Root(sol) => Ok(sol),
            Stationary::Saturated => Err(unattainable),
        }
    }

    fn stationary_point(&self, model: &NoiseModel, v: f64) -> Result<Stationary, NoiseError> {
        let scale = v.abs().max(1.0);
        let stop = self.rel_tol * scale;
        let accept = self.accept_tol * scale;
        let inside = model.attains_mean(v);

        let c0 = model.cumulant_derivs(0.0)?;
        let g0 = c0.h1 - v;
        if g0.abs() <= stop {
            return Ok(Stationary::Root(TiltSolution::at(0.0, c0, true)));
        }

        // Expand a bracket [lo, hi] with g(lo) < 0 <= g(hi), g(t) = H'(t) - v.
        let dir = if g0 < 0.0 { 1.0 } else { -1.0 };
        let mut near = (0.0, c0);
        let mut step = if c0.h2 > 0.0 { (g0.abs() / c0.h2).clamp(1e-3, 1.0) } else { 1.0 };
        let far = loop {
            let t = dir * step;
            let c = model.cumulant_derivs(t)?;
            let g = c.h1 - v;
            if g.is_nan() {
                return Ok(Stationary::Saturated);
            }
            if g.abs() <= stop {
                return Ok(Stationary::Root(TiltSolution::at(t, c, true)));
            }
            if dir * g > 0.0 {
                break (t, c);
            }
            near = (t, c);
            if step >= self.bracket_cap && !inside {
                // H' has flattened out short of v.
                if g.abs() > accept {
                    return Ok(Stationary::Saturated);
                }
                return Ok(Stationary::Root(TiltSolution::at(t, c, true)));
            }
            if step > f64::MAX / 4.0 {
                return Ok(Stationary::Saturated);
            }
            step *= 2.0;
        };
        let (mut lo, mut hi) = if dir > 0.0 { (near.0, far.0) } else { (far.0, near.0) };

        // Safeguarded Newton from the endpoint closer to the root in residual terms.
        let (mut t, mut c) = if (near.1.h1 - v).abs() <= (far.1.h1 - v).abs() {
            near
        } else {
            far
        };
        let mut best = (t, c);
        for _ in 0..self.max_iter {
            let g = c.h1 - v;
            if g.abs() < (best.1.h1 - v).abs() {
                best = (t, c);
            }
            if g.abs() <= stop {
                return Ok(Stationary::Root(TiltSolution::at(t, c, true)));
            }
            if g < 0.0 {
                lo = lo.max(t);
            } else {
                hi = hi.min(t);
            }
            let newton = t - g / c.h2;
            let next = if c.h2 > 0.0 && newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if next == t || hi - lo <= 2.0 * f64::EPSILON * t.abs().max(1.0) {
                break;
            }
            t = next;
            c = model.cumulant_derivs(t)?;
        }
        let (t, c) = best;
        let converged = (c.h1 - v).abs() <= accept;
        Ok(Stationary::Root(TiltSolution::at(t, c, converged)))
    }
}

/// `L(v)` with the default solver settings.
pub fn legendre(model: &NoiseModel, v: f64) -> f64 {
    ConjugateSolver::default().legendre(model, v)
}

/// `t*` with `H'(t*) = target_mean`, default solver settings.
pub fn tilt(model: &NoiseModel, target_mean: f64) -> Result<TiltSolution, NoiseError> {
    ConjugateSolver::default().tilt(model, target_mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::FiniteSupport;
    use proptest::prelude::*;

    fn skellam_conjugate(v: f64) -> f64 {
        v * (v / 2.0).asinh() - (v * v + 4.0).sqrt() + 2.0
    }

    fn fair_coin() -> NoiseModel {
        NoiseModel::FiniteSupport(FiniteSupport::new(&[(-1.0, 0.5), (1.0, 0.5)]).unwrap())
    }

    fn models() -> Vec<NoiseModel> {
        vec![
            NoiseModel::Gaussian01,
            NoiseModel::SkellamUnit,
            fair_coin(),
            NoiseModel::FiniteSupport(FiniteSupport::centered(&[(0.0, 0.7), (1.0, 0.2), (3.0, 0.1)]).unwrap()),
            NoiseModel::sum(NoiseModel::Gaussian01, NoiseModel::SkellamUnit),
            NoiseModel::sum(fair_coin(), NoiseModel::SkellamUnit),
        ]
    }

    #[test]
    fn reference_values() {
        assert!((legendre(&NoiseModel::Gaussian01, 2.0) - 2.0).abs() < 1e-12);
        for m in models() {
            assert_eq!(legendre(&m, 0.0), 0.0, "{m}");
        }
        let l = legendre(&NoiseModel::SkellamUnit, 1.0);
        assert!((l - (0.5f64.asinh() - 5f64.sqrt() + 2.0)).abs() < 1e-12);
        assert!((l - 0.24514).abs() < 1e-5);
        assert_eq!(legendre(&fair_coin(), 1.5), f64::INFINITY);
        assert_eq!(legendre(&fair_coin(), -1.5), f64::INFINITY);
    }

    #[test]
    fn skellam_matches_grid_supremum() {
        // brute-force sup over t in [-20, 20] step 1e-4
        let v = 1.0;
        let mut best = f64::NEG_INFINITY;
        for i in -200_000..=200_000 {
            let t = i as f64 * 1e-4;
            let val = t * v - NoiseModel::SkellamUnit.cumulant(t).unwrap();
            best = best.max(val);
        }
        assert!((legendre(&NoiseModel::SkellamUnit, v) - best).abs() < 1e-8);
    }

    #[test]
    fn boundary_of_bounded_support() {
        // sup_t [t - log cosh t] = log 2, approached as t -> inf
        let l = legendre(&fair_coin(), 1.0);
        assert!((l - 2f64.ln()).abs() < 1e-9, "{l}");
        let l = legendre(&fair_coin(), 0.999);
        let exact = 0.5 * (1.999f64 * 1.999f64.ln() + 0.001f64 * 0.001f64.ln());
        assert!((l - exact).abs() < 1e-10, "{l} vs {exact}");
    }

    #[test]
    fn large_targets_beyond_the_cap_inside_unbounded_range() {
        let v = 1e6;
        assert!((legendre(&NoiseModel::Gaussian01, v) - 0.5 * v * v).abs() <= 1e-12 * v * v);
        let sol = tilt(&NoiseModel::Gaussian01, v).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.t_star, v);
    }

    #[test]
    fn skellam_closed_form_on_wide_range() {
        for i in -2000..=2000 {
            let v = i as f64 * 0.01;
            let l = legendre(&NoiseModel::SkellamUnit, v);
            assert!((l - skellam_conjugate(v)).abs() < 1e-8, "v={v}: {l}");
        }
        for &w in &[1e2, 1e4, 1e6] {
            let l = legendre(&NoiseModel::SkellamUnit, w);
            assert!((l - skellam_conjugate(w)).abs() <= 1e-12 * l, "w={w}");
        }
    }

    #[test]
    fn tilt_reference_values() {
        let s = tilt(&NoiseModel::Gaussian01, 3.0).unwrap();
        assert!((s.t_star - 3.0).abs() < 1e-12);
        assert_eq!(s.h2, 1.0);
        for m in models() {
            assert_eq!(tilt(&m, 0.0).unwrap().t_star, 0.0, "{m}");
        }
        let s = tilt(&NoiseModel::SkellamUnit, 1.0).unwrap();
        assert!((s.t_star - 0.5f64.asinh()).abs() < 1e-12);
        assert!((s.t_star - 0.48121).abs() < 1e-5);
        assert!(s.converged);
    }

    #[test]
    fn unattainable_tilt_carries_range() {
        match tilt(&fair_coin(), 1.0) {
            Err(NoiseError::UnattainableTilt { lo, hi, .. }) => assert_eq!((lo, hi), (-1.0, 1.0)),
            other => panic!("{other:?}"),
        }
        assert!(tilt(&fair_coin(), -3.0).is_err());
        assert!(tilt(&fair_coin(), 0.99).is_ok());
    }

    #[test]
    fn degenerate_law_has_infinite_conjugate_off_zero() {
        let point = NoiseModel::FiniteSupport(FiniteSupport::new(&[(0.0, 1.0)]).unwrap());
        assert_eq!(legendre(&point, 0.0), 0.0);
        assert_eq!(legendre(&point, 0.1), f64::INFINITY);
        assert!(tilt(&point, 0.0).is_err());
    }

    #[test]
    fn conjugate_duality_on_grid() {
        for m in models() {
            for i in -50..=50 {
                let t = i as f64 * 0.1;
                let c = m.cumulant_derivs(t).unwrap();
                let expect = t * c.h1 - c.h;
                let got = legendre(&m, c.h1);
                assert!((got - expect).abs() < 1e-8, "{m} t={t}: {got} vs {expect}");
            }
        }
    }

    #[test]
    fn tilt_residual_within_invariant() {
        for m in models() {
            let (lo, hi) = m.mean_range();
            for i in -40..=40 {
                let target = (i as f64 * 0.25).clamp(lo * 0.999, hi * 0.999);
                let s = tilt(&m, target).unwrap();
                assert!(s.converged);
                assert!((s.h1 - target).abs() <= 1e-10 * target.abs().max(1.0), "{m} target {target}");
                assert!(s.h2 >= 0.0);
            }
        }
    }

    proptest! {
        #[test]
        fn young_inequality(t in -8.0f64..8.0, v in -15.0f64..15.0, which in 0usize..6) {
            let m = &models()[which];
            let l = legendre(m, v);
            prop_assume!(l.is_finite());
            let h = m.cumulant(t).unwrap();
            prop_assert!(t * v <= h + l + 1e-10 * (1.0 + (t * v).abs()));
        }

        #[test]
        fn conjugate_is_nonnegative_and_convex(v1 in -6.0f64..6.0, v2 in -6.0f64..6.0, which in 0usize..6) {
            let m = &models()[which];
            let (a, b) = (legendre(m, v1), legendre(m, v2));
            let mid = legendre(m, 0.5 * (v1 + v2));
            prop_assert!(a >= 0.0 && b >= 0.0);
            if a.is_finite() && b.is_finite() {
                prop_assert!(mid <= 0.5 * (a + b) + 1e-9);
            }
        }
    }
}
