//! `F(x) = integral from 1 to x of du / f(u)` and its inverse, both in
//! `u = log x` coordinates.
//!
//! After substituting `w = log u`, `F(e^u)` is the integral over `[0, u]` of
//! `exp(w - log f(e^w))`, which stays finite long after `e^u` has left the
//! range of `f64`.
//!
//! Cumulative integrals are cached at knots. A query integrates only from the
//! nearest knot, so every result is an exact quadrature (no interpolation
//! error) and repeated queries stay cheap.

use std::sync::RwLock;

use thiserror::Error;

use crate::limits::{extrapolate_limit, geometric_grid, DiagnosticSeries, LimitEstimate, Model, Sample};
use crate::nonlinearity::{Family, Nonlinearity};
use crate::quadrature::{AdaptiveQuadrature, QuadratureFailure};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RateError {
    #[error("quadrature of 1/f failed on u in [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },
    #[error("F(e^u) is not finite at u = {u}")]
    Overflow { u: f64 },
    #[error("t = {t} lies below the range of F (inf F = {infimum})")]
    BelowDomain { t: f64, infimum: f64 },
    #[error("t = {t} lies beyond the range probed for F (u up to {u_max})")]
    AboveDomain { t: f64, u_max: f64 },
    #[error("inversion of F at t = {t} stalled with residual {residual}")]
    NoConvergence { t: f64, residual: f64 },
    #[error("lower integration limit is fixed at 1 for {0}")]
    LowerLimitLocked(String),
    #[error("asymptotic check needs the log-damped family with alpha = {expected}, got {found}")]
    WrongFamily { expected: f64, found: String },
}

impl From<QuadratureFailure> for RateError {
    fn from(q: QuadratureFailure) -> Self {
        Self::Quadrature { a: q.a, b: q.b }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Knot {
    u: f64,
    value: f64,
}

/// Lowest `u` probed when `F` is followed towards `x -> 0`.
const U_FLOOR: f64 = -740.0;
/// Highest `u` probed when bracketing `F^{-1}`.
const U_CEILING: f64 = 1e8;

#[derive(Debug)]
pub struct RateTransform {
    f: Nonlinearity,
    lower_log: f64,
    quadrature: AdaptiveQuadrature,
    inversion_tol: f64,
    // Knots above the lower limit, increasing in u; first knot is (lower_log, 0).
    upper: RwLock<Vec<Knot>>,
    // Knots below the lower limit, decreasing in u; first knot is (lower_log, 0).
    lower: RwLock<Vec<Knot>>,
}

impl Clone for RateTransform {
    fn clone(&self) -> Self {
        Self {
            f: self.f,
            lower_log: self.lower_log,
            quadrature: self.quadrature.clone(),
            inversion_tol: self.inversion_tol,
            upper: RwLock::new(self.upper.read().expect("knot cache poisoned").clone()),
            lower: RwLock::new(self.lower.read().expect("knot cache poisoned").clone()),
        }
    }
}

impl RateTransform {
    pub const DEFAULT_QUADRATURE_TOL: f64 = 1e-9;
    pub const DEFAULT_INVERSION_TOL: f64 = 1e-10;

    pub fn new(f: Nonlinearity) -> Self {
        Self::with_tolerances(f, Self::DEFAULT_QUADRATURE_TOL, Self::DEFAULT_INVERSION_TOL)
    }

    pub fn with_tolerances(f: Nonlinearity, quadrature_tol: f64, inversion_tol: f64) -> Self {
        let origin = vec![Knot { u: 0.0, value: 0.0 }];
        Self {
            f,
            lower_log: 0.0,
            quadrature: AdaptiveQuadrature::new(quadrature_tol),
            inversion_tol,
            upper: RwLock::new(origin.clone()),
            lower: RwLock::new(origin),
        }
    }

    /// Moves the lower integration limit to `x0`. Only test families accept this.
    pub fn with_lower_limit(mut self, x0: f64) -> Result<Self, RateError> {
        if !self.f.is_test_only() {
            return Err(RateError::LowerLimitLocked(self.f.descriptor()));
        }
        let lower_log = x0.ln();
        let origin = vec![Knot { u: lower_log, value: 0.0 }];
        self.lower_log = lower_log;
        self.upper = RwLock::new(origin.clone());
        self.lower = RwLock::new(origin);
        Ok(self)
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.f
    }

    pub fn inversion_tolerance(&self) -> f64 {
        self.inversion_tol
    }

    /// `dF(e^u)/du = e^u / f(e^u)`.
    pub fn slope(&self, u: f64) -> f64 {
        (u - self.f.log_value(u)).exp()
    }

    fn segment(&self, a: f64, b: f64) -> Result<f64, RateError> {
        let value = self.quadrature.integrate(|w| self.slope(w), a, b)?;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(RateError::Overflow { u: b })
        }
    }

    fn knot_width(u: f64) -> f64 {
        (u.abs() / 64.0).max(1.0)
    }

    /// `F(e^u)`.
    pub fn compute_f(&self, u: f64) -> Result<f64, RateError> {
        if !u.is_finite() {
            return Err(RateError::Overflow { u });
        }
        if u >= self.lower_log {
            let knot = self.nearest_upper_knot(u)?;
            Ok(knot.value + self.segment(knot.u, u)?)
        } else {
            let knot = self.nearest_lower_knot(u)?;
            Ok(knot.value - self.segment(u, knot.u)?)
        }
    }

    fn nearest_upper_knot(&self, u: f64) -> Result<Knot, RateError> {
        {
            let knots = self.upper.read().expect("knot cache poisoned");
            let last = *knots.last().expect("origin knot");
            if last.u + Self::knot_width(last.u) > u {
                let idx = knots.partition_point(|k| k.u <= u);
                return Ok(knots[idx - 1]);
            }
        }
        let mut knots = self.upper.write().expect("knot cache poisoned");
        loop {
            let last = *knots.last().expect("origin knot");
            let next = last.u + Self::knot_width(last.u);
            if next > u {
                break;
            }
            let value = last.value + self.segment(last.u, next)?;
            knots.push(Knot { u: next, value });
        }
        let idx = knots.partition_point(|k| k.u <= u);
        Ok(knots[idx - 1])
    }

    fn nearest_lower_knot(&self, u: f64) -> Result<Knot, RateError> {
        {
            let knots = self.lower.read().expect("knot cache poisoned");
            let last = *knots.last().expect("origin knot");
            if last.u - Self::knot_width(last.u) < u {
                let idx = knots.partition_point(|k| k.u >= u);
                return Ok(knots[idx - 1]);
            }
        }
        let mut knots = self.lower.write().expect("knot cache poisoned");
        loop {
            let last = *knots.last().expect("origin knot");
            let next = last.u - Self::knot_width(last.u);
            if next < u {
                break;
            }
            let value = last.value - self.segment(next, last.u)?;
            knots.push(Knot { u: next, value });
        }
        let idx = knots.partition_point(|k| k.u >= u);
        Ok(knots[idx - 1])
    }

    /// Number of cached knots (both directions).
    pub fn cached_knots(&self) -> usize {
        self.upper.read().expect("knot cache poisoned").len()
            + self.lower.read().expect("knot cache poisoned").len()
    }

    /// `u = log F^{-1}(t)`: bracketing plus safeguarded Newton on the increasing
    /// map `u -> F(e^u)`.
    pub fn invert_f(&self, t: f64) -> Result<f64, RateError> {
        if !t.is_finite() {
            return Err(RateError::AboveDomain { t, u_max: U_CEILING });
        }
        let tol = self.inversion_tol * t.abs().max(1.0);
        let base = self.lower_log;
        let (mut lo, mut hi) = if t >= 0.0 {
            let (mut lo, mut hi) = (base, base + 1.0);
            while self.compute_f(hi)? < t {
                lo = hi;
                hi = base + 2.0 * (hi - base);
                if hi > U_CEILING {
                    return Err(RateError::AboveDomain { t, u_max: U_CEILING });
                }
            }
            (lo, hi)
        } else {
            let (mut lo, mut hi) = (base - 1.0, base);
            loop {
                let f_lo = self.compute_f(lo)?;
                if f_lo <= t {
                    break;
                }
                hi = lo;
                lo = base - 2.0 * (base - lo);
                if lo < U_FLOOR {
                    return Err(RateError::BelowDomain {
                        t,
                        infimum: self.compute_f(U_FLOOR)?,
                    });
                }
            }
            (lo, hi)
        };

        let mut u = 0.5 * (lo + hi);
        let mut residual = f64::INFINITY;
        for _ in 0..200 {
            let g = self.compute_f(u)? - t;
            residual = g.abs();
            if g > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let step = g / self.slope(u);
            let newton = u - step;
            let next = if newton > lo && newton < hi && newton.is_finite() {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let converged = (next - u).abs() <= 4.0 * f64::EPSILON * u.abs().max(1.0);
            u = next;
            if (converged && residual <= tol) || hi - lo <= 4.0 * f64::EPSILON * u.abs().max(1.0) {
                let final_residual = (self.compute_f(u)? - t).abs();
                if final_residual <= tol {
                    return Ok(u);
                }
                residual = final_residual;
                break;
            }
        }
        Err(RateError::NoConvergence { t, residual })
    }

    /// `F(e^u) (1 + alpha) / u^(1 + alpha)` on a geometric grid up to `u_max`,
    /// with its extrapolated limit. Requires the log-damped family.
    pub fn check_f_asymptotics(
        &self,
        alpha: f64,
        u_max: f64,
    ) -> Result<(DiagnosticSeries, LimitEstimate), RateError> {
        match self.f.family() {
            Family::LogDamped { alpha: a } if a == alpha => {}
            _ => {
                return Err(RateError::WrongFamily {
                    expected: alpha,
                    found: self.f.descriptor(),
                })
            }
        }
        let grid = geometric_grid((u_max / 1e3).max(1.0), u_max, 31);
        let mut samples = Vec::with_capacity(grid.len());
        for u in grid {
            let value = self.compute_f(u)? * (1.0 + alpha) / u.powf(1.0 + alpha);
            samples.push(Sample { t: u, value, ell: u });
        }
        let series = DiagnosticSeries::new("f-asymptotic-ratio", samples)
            .expect("increasing grid with finite values")
            .with_meta("alpha", alpha);
        let limit = extrapolate_limit(&series, Model::LogFit).expect("31 samples");
        Ok((series, limit))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_family_gives_x_minus_one() {
        let rt = RateTransform::new(Nonlinearity::constant(1.0).unwrap());
        assert_relative_eq!(rt.compute_f(5f64.ln()).unwrap(), 4.0, max_relative = 1e-12);
        assert_relative_eq!(rt.invert_f(4.0).unwrap(), 5f64.ln(), max_relative = 1e-12);
        // x in (0, 1) gives negative values
        assert_relative_eq!(rt.compute_f(0.5f64.ln()).unwrap(), -0.5, max_relative = 1e-12);
    }

    #[test]
    fn linear_family_gives_log() {
        let rt = RateTransform::new(Nonlinearity::linear(1.0).unwrap());
        assert_relative_eq!(rt.compute_f(3.0).unwrap(), 3.0, max_relative = 1e-13);
        for t in [-20.0, -1.0, 0.0, 0.5, 7.0, 1e3] {
            assert!((rt.invert_f(t).unwrap() - t).abs() <= 1e-10 * t.abs().max(1.0));
        }
    }

    #[test]
    fn log_damped_family_roundtrip() {
        let rt = RateTransform::new(Nonlinearity::log_damped(1.0).unwrap());
        for u in [1.0, 10.0, 100.0] {
            let t = rt.compute_f(u).unwrap();
            assert!((rt.invert_f(t).unwrap() - u).abs() < 1e-8);
        }
    }

    #[test]
    fn large_t_asymptotics_alpha_one() {
        let rt = RateTransform::new(Nonlinearity::log_damped(1.0).unwrap());
        let t = 1e4;
        let u = rt.invert_f(t).unwrap();
        let ratio = u / (2.0 * t).sqrt();
        assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn below_domain_is_an_error() {
        // f(0) > 0 so F is bounded below as x -> 0
        let rt = RateTransform::new(Nonlinearity::log_damped(1.0).unwrap());
        let err = rt.invert_f(-10.0).unwrap_err();
        assert!(matches!(err, RateError::BelowDomain { .. }), "{err:?}");
    }

    #[test]
    fn lower_limit_only_for_test_families() {
        assert!(RateTransform::new(Nonlinearity::log_damped(1.0).unwrap())
            .with_lower_limit(2.0)
            .is_err());
        let rt = RateTransform::new(Nonlinearity::constant(1.0).unwrap())
            .with_lower_limit(2.0)
            .unwrap();
        assert_relative_eq!(rt.compute_f(5f64.ln()).unwrap(), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn wrong_family_for_asymptotics() {
        let rt = RateTransform::new(Nonlinearity::log_damped(1.0).unwrap());
        assert!(matches!(rt.check_f_asymptotics(2.0, 1e3), Err(RateError::WrongFamily { .. })));
    }

    #[test]
    fn knots_are_monotone_in_both_coordinates() {
        let rt = RateTransform::new(Nonlinearity::log_damped(1.0).unwrap());
        rt.compute_f(500.0).unwrap();
        rt.compute_f(-30.0).unwrap();
        let up = rt.upper.read().unwrap();
        assert!(up.windows(2).all(|w| w[1].u > w[0].u && w[1].value > w[0].value));
        let down = rt.lower.read().unwrap();
        assert!(down.windows(2).all(|w| w[1].u < w[0].u && w[1].value < w[0].value));
    }
}
