use std::fmt;
use std::sync::Arc;

use super::{legendre, NoiseError, NoiseModel};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Rate of speed `q(ε)`: the factor multiplying log-probabilities.
#[derive(Clone)]
pub enum Speed {
    /// `q(ε) = ε²`
    EpsSquared,
    /// `q(ε) = ε / |log ε|`
    EpsOverLogEps,
    Custom(ScalarFn),
}

impl Speed {
    pub fn eval(&self, eps: f64) -> f64 {
        match self {
            Speed::EpsSquared => eps * eps,
            Speed::EpsOverLogEps => eps / eps.ln().abs(),
            Speed::Custom(f) => f(eps),
        }
    }
}

impl fmt::Debug for Speed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Speed::EpsSquared => write!(f, "EpsSquared"),
            Speed::EpsOverLogEps => write!(f, "EpsOverLogEps"),
            Speed::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Scaled rate function `I(v)`.
#[derive(Clone)]
pub enum RateFn {
    /// `I(v) = v²/2`
    HalfSquare,
    /// `I(v) = |v|`
    Abs,
    Custom(ScalarFn),
}

impl RateFn {
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            RateFn::HalfSquare => 0.5 * v * v,
            RateFn::Abs => v.abs(),
            RateFn::Custom(f) => f(v),
        }
    }
}

impl fmt::Debug for RateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateFn::HalfSquare => write!(f, "HalfSquare"),
            RateFn::Abs => write!(f, "Abs"),
            RateFn::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// A speed `q(ε)` paired with the rate function `I(v) = lim q(ε) L(v/ε)`.
#[derive(Debug, Clone)]
pub struct RateProfile {
    speed: Speed,
    rate: RateFn,
    cutoff_pos: f64,
    cutoff_neg: f64,
}

impl RateProfile {
    /// `q(ε) = ε²`, `I(v) = v²/2`.
    pub fn gaussian() -> Self {
        RateProfile {
            speed: Speed::EpsSquared,
            rate: RateFn::HalfSquare,
            cutoff_pos: f64::INFINITY,
            cutoff_neg: f64::NEG_INFINITY,
        }
    }

    /// `q(ε) = ε/|log ε|`, `I(v) = |v|`.
    pub fn skellam() -> Self {
        RateProfile {
            speed: Speed::EpsOverLogEps,
            rate: RateFn::Abs,
            cutoff_pos: f64::INFINITY,
            cutoff_neg: f64::NEG_INFINITY,
        }
    }

    /// A user-supplied profile, checked by [`RateProfile::validate`].
    /// `I` is taken to be `∞` outside `[cutoff_neg, cutoff_pos]`.
    pub fn custom(speed: Speed, rate: RateFn, cutoff_neg: f64, cutoff_pos: f64) -> Result<Self, NoiseError> {
        let profile = RateProfile {
            speed,
            rate,
            cutoff_pos,
            cutoff_neg,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn speed(&self) -> &Speed {
        &self.speed
    }

    pub fn rate_fn(&self) -> &RateFn {
        &self.rate
    }

    pub fn q(&self, eps: f64) -> f64 {
        self.speed.eval(eps)
    }

    pub fn rate(&self, v: f64) -> f64 {
        if v > self.cutoff_pos || v < self.cutoff_neg {
            return f64::INFINITY;
        }
        self.rate.eval(v)
    }

    pub fn cutoffs(&self) -> (f64, f64) {
        (self.cutoff_neg, self.cutoff_pos)
    }

    /// True for the `(ε², v²/2)` pair of standard Gaussian noise.
    pub fn is_gaussian(&self) -> bool {
        matches!((&self.speed, &self.rate), (Speed::EpsSquared, RateFn::HalfSquare))
            && self.cutoff_pos == f64::INFINITY
            && self.cutoff_neg == f64::NEG_INFINITY
    }

    /// Checks `I(0) = 0`, `I ≥ 0`, growth of `I` towards `|v| = 10³`, and `q > 0`
    /// decreasing on a grid of small `ε`.
    pub fn validate(&self) -> Result<(), NoiseError> {
        let bad = |msg: String| Err(NoiseError::InvalidProfile(msg));
        if !(self.cutoff_neg <= 0.0 && self.cutoff_pos >= 0.0) {
            return bad(format!("cutoffs ({}, {}) must bracket 0", self.cutoff_neg, self.cutoff_pos));
        }
        if self.rate(0.0) != 0.0 {
            return bad(format!("I(0) = {}", self.rate(0.0)));
        }
        let grid: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        for &v in &grid {
            for x in [v, -v, v * 1e-3, -v * 1e-3] {
                let r = self.rate(x);
                if r.is_nan() || r < 0.0 {
                    return bad(format!("I({x}) = {r}"));
                }
            }
        }
        for sign in [1.0, -1.0] {
            let near = self.rate(sign);
            let far = self.rate(sign * 1e3);
            if !(far > near || far == f64::INFINITY) {
                return bad(format!("I does not grow: I({}) = {far} vs I({sign}) = {near}", sign * 1e3));
            }
        }
        let mut prev = f64::INFINITY;
        for k in 1..=12 {
            let q = self.q(10f64.powi(-k));
            if !(q > 0.0 && q < prev) {
                return bad(format!("q(1e-{k}) = {q} is not positive and decreasing"));
            }
            prev = q;
        }
        Ok(())
    }
}

fn known_profile(model: &NoiseModel) -> Option<RateProfile> {
    match model {
        NoiseModel::Gaussian01 => Some(RateProfile::gaussian()),
        NoiseModel::SkellamUnit => Some(RateProfile::skellam()),
        NoiseModel::FiniteSupport(_) => None,
        NoiseModel::Sum(l, r) => match (l.as_ref(), r.as_ref()) {
            (NoiseModel::Gaussian01, NoiseModel::SkellamUnit) | (NoiseModel::SkellamUnit, NoiseModel::Gaussian01) => {
                Some(RateProfile::skellam())
            }
            // A bounded summand is exponentially negligible against the other one.
            (NoiseModel::FiniteSupport(_), other) | (other, NoiseModel::FiniteSupport(_)) => known_profile(other),
            _ => None,
        },
    }
}

/// Known `(q, I)` pair for the model.
pub fn scaled_rate(model: &NoiseModel) -> Result<RateProfile, NoiseError> {
    known_profile(model).ok_or_else(|| NoiseError::UnknownProfile(model.to_string()))
}

/// Pre-limit value `q(ε) L(v/ε)`. `speed` overrides the model's known speed.
pub fn empirical_scaled_rate(model: &NoiseModel, v: f64, eps: f64, speed: Option<&Speed>) -> Result<f64, NoiseError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(NoiseError::InvalidEps(eps));
    }
    let q = match speed {
        Some(s) => s.eval(eps),
        None => scaled_rate(model)?.q(eps),
    };
    let l = legendre(model, v / eps);
    if l == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    Ok(q * l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::FiniteSupport;

    fn skellam_oracle(v: f64, eps: f64) -> f64 {
        let w = v / eps;
        let l = w * (w / 2.0).asinh() - (w * w + 4.0).sqrt() + 2.0;
        eps / eps.ln().abs() * l
    }

    fn coin() -> NoiseModel {
        NoiseModel::FiniteSupport(FiniteSupport::new(&[(-1.0, 0.5), (1.0, 0.5)]).unwrap())
    }

    #[test]
    fn profiles_of_built_in_kinds() {
        let g = scaled_rate(&NoiseModel::Gaussian01).unwrap();
        assert_eq!(g.rate(3.0), 4.5);
        assert!((g.q(0.1) - 0.01).abs() < 1e-16);
        assert!(g.is_gaussian());

        let s = scaled_rate(&NoiseModel::SkellamUnit).unwrap();
        assert_eq!(s.rate(-2.0), 2.0);

        let mix = scaled_rate(&NoiseModel::sum(NoiseModel::Gaussian01, NoiseModel::SkellamUnit)).unwrap();
        assert_eq!(mix.rate(1.0), 1.0);
        let eps: f64 = 0.01;
        assert_eq!(mix.q(eps), eps / eps.ln().abs());
        let mix = scaled_rate(&NoiseModel::sum(NoiseModel::SkellamUnit, NoiseModel::Gaussian01)).unwrap();
        assert_eq!(mix.rate(-1.5), 1.5);
    }

    #[test]
    fn finite_support_summand_is_negligible() {
        let p = scaled_rate(&NoiseModel::sum(coin(), NoiseModel::Gaussian01)).unwrap();
        assert!(p.is_gaussian());
        let p = scaled_rate(&NoiseModel::sum(NoiseModel::SkellamUnit, coin())).unwrap();
        assert_eq!(p.rate(2.0), 2.0);
    }

    #[test]
    fn unlicensed_combinations_are_unknown() {
        assert!(matches!(scaled_rate(&coin()), Err(NoiseError::UnknownProfile(_))));
        assert!(scaled_rate(&NoiseModel::sum(NoiseModel::Gaussian01, NoiseModel::Gaussian01)).is_err());
        assert!(scaled_rate(&NoiseModel::sum(coin(), coin())).is_err());
    }

    #[test]
    fn gaussian_scaled_rate_is_eps_independent() {
        for &eps in &[0.5, 0.1, 0.01, 1e-3] {
            for &v in &[-3.0, -1.0, 0.0, 0.5, 1.0, 2.0] {
                let val = empirical_scaled_rate(&NoiseModel::Gaussian01, v, eps, None).unwrap();
                assert!((val - 0.5 * v * v).abs() <= 1e-12 * (1.0 + v * v), "eps={eps} v={v}");
            }
        }
        // ε² is itself rounded, so "exact" means within a couple of ulps
        let v = empirical_scaled_rate(&NoiseModel::Gaussian01, 1.0, 0.1, None).unwrap();
        assert!((v - 0.5).abs() <= 4.0 * f64::EPSILON * 0.5);
    }

    #[test]
    fn skellam_pre_limit_values() {
        let at = |eps| empirical_scaled_rate(&NoiseModel::SkellamUnit, 1.0, eps, None).unwrap();
        assert!((at(1e-4) - skellam_oracle(1.0, 1e-4)).abs() < 1e-10);
        assert!((at(1e-4) - 0.8915).abs() < 1e-4);
        // closed-form oracle gives 0.92762 here; the gap to the limit is about 1/|log ε|
        assert!((at(1e-6) - skellam_oracle(1.0, 1e-6)).abs() < 1e-10);
        assert!((at(1e-6) - 0.92762).abs() < 1e-5);
    }

    #[test]
    fn speed_override_and_errors() {
        let q = Speed::Custom(Arc::new(|e: f64| e * e));
        let v = empirical_scaled_rate(&coin(), 0.5, 0.5, Some(&q)).unwrap();
        let l = legendre(&coin(), 1.0);
        assert!((v - 0.25 * l).abs() < 1e-12);
        assert_eq!(empirical_scaled_rate(&coin(), 1.0, 0.1, Some(&q)).unwrap(), f64::INFINITY);
        assert!(empirical_scaled_rate(&coin(), 0.1, 0.1, None).is_err());
        assert!(matches!(
            empirical_scaled_rate(&NoiseModel::Gaussian01, 1.0, 1.5, None),
            Err(NoiseError::InvalidEps(_))
        ));
    }

    #[test]
    fn validation_of_custom_profiles() {
        assert!(RateProfile::gaussian().validate().is_ok());
        assert!(RateProfile::skellam().validate().is_ok());
        let shifted = RateProfile::custom(Speed::EpsSquared, RateFn::Custom(Arc::new(|v| v * v + 1.0)), f64::NEG_INFINITY, f64::INFINITY);
        assert!(shifted.is_err());
        let flat = RateProfile::custom(Speed::EpsSquared, RateFn::Custom(Arc::new(|v: f64| v.abs().min(1.0))), f64::NEG_INFINITY, f64::INFINITY);
        assert!(flat.is_err());
        let bounded = RateProfile::custom(Speed::EpsSquared, RateFn::HalfSquare, -1.0, 1.0).unwrap();
        assert_eq!(bounded.rate(1.0), 0.5);
        assert_eq!(bounded.rate(1.01), f64::INFINITY);
        assert!(!bounded.is_gaussian());
    }
}
