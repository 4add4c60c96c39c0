//! Registered nonlinearities `f` with closed-form derivatives and a
//! log-domain channel `u -> log f(e^u)` that stays finite far beyond the range
//! of `f64` in `x`.
//!
//! Only [`Family::LogDamped`] satisfies the hypotheses of the growth
//! theorems; the other families exist for tests and sanity checks.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::limits::{
    aitken_sequence, extrapolate_limit, geometric_grid, DiagnosticSeries,
    LimitEstimate, Model, Sample,
};
use crate::logspace::log_offset_exp;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NonlinearityError {
    #[error("log-damped family needs alpha > 0, got {0}")]
    InvalidAlpha(f64),
    #[error("power family needs coefficient > 0, exponent in [0, 1] and offset >= 0 (got {coefficient}, {exponent}, {offset})")]
    InvalidPower {
        coefficient: f64,
        exponent: f64,
        offset: f64,
    },
    #[error("{family}: parameter `{name}` must be positive and finite, got {value}")]
    InvalidParameter {
        family: &'static str,
        name: &'static str,
        value: f64,
    },
    #[error("log grid [{u_min}, {u_max}] must satisfy 0 < u_min < u_max, span three decades and hold >= 8 points")]
    InvalidGrid { u_min: f64, u_max: f64 },
    #[error("perturbation violates 0 < eps(x) < f(x) at x = {x} (eps/f = {ratio})")]
    PerturbationOutOfRange { x: f64, ratio: f64 },
}

/// Parametric families the tool knows how to evaluate exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Family {
    /// `f(x) = (x + 1) / log(2 + x)^alpha`
    LogDamped { alpha: f64 },
    /// `f(x) = coefficient * (offset + x)^exponent` (test-only)
    Power {
        coefficient: f64,
        exponent: f64,
        offset: f64,
    },
    /// `f(x) = slope * x` (test-only)
    LinearTest { slope: f64 },
    /// `f(x) = value` (test-only)
    ConstantTest { value: f64 },
    /// `f(x) = scale * x / log(x + e)`; critical rate with `lambda = scale` (test-only)
    CriticalTest { scale: f64 },
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LogDamped { alpha } => write!(f, "log-damped(alpha={alpha})"),
            Self::Power {
                coefficient,
                exponent,
                offset,
            } => write!(f, "power({coefficient}*({offset}+x)^{exponent})"),
            Self::LinearTest { slope } => write!(f, "linear-test({slope}*x)"),
            Self::ConstantTest { value } => write!(f, "constant-test({value})"),
            Self::CriticalTest { scale } => write!(f, "critical-test({scale}*x/log(x+e))"),
        }
    }
}

/// A validated member of one of the registered [`Family`]s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Family", into = "Family")]
pub struct Nonlinearity {
    family: Family,
}

impl TryFrom<Family> for Nonlinearity {
    type Error = NonlinearityError;

    fn try_from(family: Family) -> Result<Self, Self::Error> {
        Self::new(family)
    }
}

impl From<Nonlinearity> for Family {
    fn from(n: Nonlinearity) -> Self {
        n.family
    }
}

fn positive(family: &'static str, name: &'static str, value: f64) -> Result<(), NonlinearityError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(NonlinearityError::InvalidParameter { family, name, value })
    }
}

/// `log(2 + e^u)` and `(1 + x)/(2 + x)` for `x = e^u`.
fn log_damped_logs(u: f64) -> (f64, f64) {
    let l = log_offset_exp(2.0, u);
    let q = if u > 0.0 {
        let e = (-u).exp();
        (1.0 + e) / (1.0 + 2.0 * e)
    } else {
        let x = u.exp();
        (1.0 + x) / (2.0 + x)
    };
    (l, q)
}

impl Nonlinearity {
    pub fn new(family: Family) -> Result<Self, NonlinearityError> {
        match family {
            Family::LogDamped { alpha } => {
                if !(alpha.is_finite() && alpha > 0.0) {
                    return Err(NonlinearityError::InvalidAlpha(alpha));
                }
            }
            Family::Power {
                coefficient,
                exponent,
                offset,
            } => {
                let ok = coefficient.is_finite()
                    && coefficient > 0.0
                    && (0.0..=1.0).contains(&exponent)
                    && offset.is_finite()
                    && offset >= 0.0;
                if !ok {
                    return Err(NonlinearityError::InvalidPower {
                        coefficient,
                        exponent,
                        offset,
                    });
                }
            }
            Family::LinearTest { slope } => positive("linear-test", "slope", slope)?,
            Family::ConstantTest { value } => positive("constant-test", "value", value)?,
            Family::CriticalTest { scale } => positive("critical-test", "scale", scale)?,
        }
        Ok(Self { family })
    }

    /// `f(x) = (x + 1) / log^alpha(2 + x)`.
    pub fn log_damped(alpha: f64) -> Result<Self, NonlinearityError> {
        Self::new(Family::LogDamped { alpha })
    }

    pub fn power(coefficient: f64, exponent: f64, offset: f64) -> Result<Self, NonlinearityError> {
        Self::new(Family::Power {
            coefficient,
            exponent,
            offset,
        })
    }

    pub fn linear(slope: f64) -> Result<Self, NonlinearityError> {
        Self::new(Family::LinearTest { slope })
    }

    pub fn constant(value: f64) -> Result<Self, NonlinearityError> {
        Self::new(Family::ConstantTest { value })
    }

    pub fn critical(scale: f64) -> Result<Self, NonlinearityError> {
        Self::new(Family::CriticalTest { scale })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Families that violate the growth-theorem hypotheses.
    pub fn is_test_only(&self) -> bool {
        !matches!(self.family, Family::LogDamped { .. })
    }

    pub fn descriptor(&self) -> String {
        self.family.to_string()
    }

    pub fn value(&self, x: f64) -> f64 {
        match self.family {
            Family::LogDamped { alpha } => (x + 1.0) / (2.0 + x).ln().powf(alpha),
            Family::Power {
                coefficient,
                exponent,
                offset,
            } => coefficient * (offset + x).powf(exponent),
            Family::LinearTest { slope } => slope * x,
            Family::ConstantTest { value } => value,
            Family::CriticalTest { scale } => scale * x / (x + std::f64::consts::E).ln(),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self.family {
            Family::LogDamped { alpha } => {
                let l = (2.0 + x).ln();
                (1.0 - (1.0 + x) * alpha / ((2.0 + x) * l)) / l.powf(alpha)
            }
            Family::Power {
                coefficient,
                exponent,
                offset,
            } => {
                if exponent == 0.0 {
                    0.0
                } else {
                    coefficient * exponent * (offset + x).powf(exponent - 1.0)
                }
            }
            Family::LinearTest { slope } => slope,
            Family::ConstantTest { .. } => 0.0,
            Family::CriticalTest { scale } => {
                let e = std::f64::consts::E;
                let l = (x + e).ln();
                scale * (1.0 / l - x / ((x + e) * l * l))
            }
        }
    }

    /// `log f(e^u)`, finite for any finite `u` in the positive half-line.
    pub fn log_value(&self, u: f64) -> f64 {
        match self.family {
            Family::LogDamped { alpha } => {
                let (l, _) = log_damped_logs(u);
                log_offset_exp(1.0, u) - alpha * l.ln()
            }
            Family::Power {
                coefficient,
                exponent,
                offset,
            } => coefficient.ln() + exponent * log_offset_exp(offset, u),
            Family::LinearTest { slope } => slope.ln() + u,
            Family::ConstantTest { value } => value.ln(),
            Family::CriticalTest { scale } => {
                scale.ln() + u - log_offset_exp(std::f64::consts::E, u).ln()
            }
        }
    }

    /// `log f'(e^u)`; `-inf` where `f' = 0`, NaN where `f' < 0`.
    pub fn log_derivative_at_log(&self, u: f64) -> f64 {
        match self.family {
            Family::LogDamped { alpha } => {
                let (l, q) = log_damped_logs(u);
                -alpha * l.ln() + (1.0 - alpha * q / l).ln()
            }
            Family::Power {
                coefficient,
                exponent,
                offset,
            } => {
                if exponent == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (coefficient * exponent).ln() + (exponent - 1.0) * log_offset_exp(offset, u)
                }
            }
            Family::LinearTest { slope } => slope.ln(),
            Family::ConstantTest { .. } => f64::NEG_INFINITY,
            Family::CriticalTest { scale } => {
                let e = std::f64::consts::E;
                let l = log_offset_exp(e, u);
                // x/(x + e) written to avoid overflow
                let q = 1.0 / (1.0 + (1.0 - u).exp());
                scale.ln() - l.ln() + (1.0 - q / l).ln()
            }
        }
    }

    /// `f'(e^u)`, including where `f'` is negative.
    pub fn derivative_at_log(&self, u: f64) -> f64 {
        if u < 30.0 {
            self.derivative(u.exp())
        } else {
            self.log_derivative_at_log(u).exp()
        }
    }

    /// Threshold `x1` beyond which `f' > 0`.
    pub fn monotone_threshold(&self) -> f64 {
        match self.family {
            Family::LogDamped { alpha } => alpha.exp() - 2.0,
            Family::Power { exponent, .. } if exponent == 0.0 => f64::INFINITY,
            Family::ConstantTest { .. } => f64::INFINITY,
            _ => 0.0,
        }
    }
}

/// Perturbation `eps` in `x' = f(x) - eps(x)`, always expressed relative to `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Perturbation {
    /// `eps = c * f * f'`
    ScaledFfPrime { c: f64 },
    /// `eps = kappa * f`
    Proportional { kappa: f64 },
}

impl Perturbation {
    /// `eps(x) / f(x)` at `x = e^u`.
    pub fn relative_at_log(&self, f: &Nonlinearity, u: f64) -> f64 {
        match *self {
            Self::ScaledFfPrime { c } => c * f.derivative_at_log(u),
            Self::Proportional { kappa } => kappa,
        }
    }

    /// `eps(x) / f(x)` for moderate `x`, including `x = 0`.
    pub fn relative(&self, f: &Nonlinearity, x: f64) -> f64 {
        match *self {
            Self::ScaledFfPrime { c } => c * f.derivative(x),
            Self::Proportional { kappa } => kappa,
        }
    }

    pub fn value(&self, f: &Nonlinearity, x: f64) -> f64 {
        self.relative(f, x) * f.value(x)
    }

    /// Checks `0 < eps/f < 1` on a linear grid of `[0, 10]` and a geometric
    /// grid in `u` up to `u_max`.
    pub fn validate_against(&self, f: &Nonlinearity, u_max: f64) -> Result<(), NonlinearityError> {
        let check = |x: f64, ratio: f64| {
            if ratio > 0.0 && ratio < 1.0 {
                Ok(())
            } else {
                Err(NonlinearityError::PerturbationOutOfRange { x, ratio })
            }
        };
        for k in 0..=200 {
            let x = 10.0 * k as f64 / 200.0;
            check(x, self.relative(f, x))?;
        }
        for u in geometric_grid(1.0, u_max.max(10.0), 200) {
            check(u.exp(), self.relative_at_log(f, u))?;
        }
        Ok(())
    }
}

/// Geometric grid in `u = log x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGrid {
    pub u_min: f64,
    pub u_max: f64,
    pub points: usize,
}

impl Default for LogGrid {
    fn default() -> Self {
        Self {
            u_min: 10.0,
            u_max: 1e4,
            points: 61,
        }
    }
}

impl LogGrid {
    pub fn new(u_min: f64, u_max: f64, points: usize) -> Result<Self, NonlinearityError> {
        let grid = Self { u_min, u_max, points };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), NonlinearityError> {
        if !(self.u_min > 0.0 && self.u_max.is_finite() && self.u_max >= 1e3 * self.u_min && self.points >= 8) {
            return Err(NonlinearityError::InvalidGrid {
                u_min: self.u_min,
                u_max: self.u_max,
            });
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        geometric_grid(self.u_min, self.u_max, self.points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum LambdaClass {
    Zero,
    Finite { value: f64, uncertainty: f64 },
    Infinite,
    /// `f` has a finite limit; the growth comparison is trivial.
    BoundedF,
    Inconclusive,
}

impl fmt::Display for LambdaClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => f.write_str("zero"),
            Self::Finite { value, uncertainty } => write!(f, "finite({value:.6} +/- {uncertainty:.1e})"),
            Self::Infinite => f.write_str("infinite"),
            Self::BoundedF => f.write_str("bounded-f trivial regime"),
            Self::Inconclusive => f.write_str("inconclusive"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaEstimate {
    pub class: LambdaClass,
    /// `(u, r(u))` with `r(u) = f(e^u) * u / e^u`.
    pub series: Vec<(f64, f64)>,
    pub tail_slope: f64,
}

const EXTREME_HIGH: f64 = 1e3;
const EXTREME_LOW: f64 = 1e-3;
const SLOPE_TOL: f64 = 0.05;
const FINITE_SPREAD: f64 = 0.01;
const BOUNDED_INCREMENT: f64 = 1e-6;

/// Classifies `lambda = lim f(x) log(x) / x` from `r(u) = exp(log f(e^u) - u) * u`
/// over the last decade of the grid.
///
/// Infinite: `r` strictly increasing and either exceeding `1e3` or with log-log
/// slope above `0.05`. Zero: the mirror image. Finite: the Aitken-accelerated
/// tail varies by less than 1%. Anything else is inconclusive.
pub fn estimate_lambda(f: &Nonlinearity, grid: &LogGrid) -> Result<LambdaEstimate, NonlinearityError> {
    grid.validate()?;
    let us = grid.points();
    // log r(u), kept in log form so that r may under- or overflow freely
    let log_r: Vec<(f64, f64)> = us.iter().map(|&u| (u, f.log_value(u) - u + u.ln())).collect();
    let series: Vec<(f64, f64)> = log_r.iter().map(|&(u, lr)| (u, lr.exp())).collect();
    let tail_from = grid.u_max / 10.0;
    let tail: Vec<(f64, f64)> = log_r
        .iter()
        .copied()
        .filter(|&(u, _)| u >= tail_from * (1.0 - 1e-12))
        .collect();

    let lf_increment = f.log_value(grid.u_max) - f.log_value(tail_from);
    let finite_tail = tail.iter().all(|&(_, lr)| lr.is_finite());
    let slope = if finite_tail { regression_slope(&tail) } else { f64::NAN };
    let lrs: Vec<f64> = tail.iter().map(|&(_, lr)| lr).collect();
    let increasing = lrs.windows(2).all(|w| w[1] > w[0]);
    let decreasing = lrs.windows(2).all(|w| w[1] < w[0]);
    let last = lrs.last().copied().unwrap_or(f64::NAN);

    let class = if lf_increment.abs() < BOUNDED_INCREMENT {
        LambdaClass::BoundedF
    } else if !finite_tail {
        LambdaClass::Inconclusive
    } else if increasing && (last > EXTREME_HIGH.ln() || slope > SLOPE_TOL) {
        LambdaClass::Infinite
    } else if decreasing && (last < EXTREME_LOW.ln() || slope < -SLOPE_TOL) {
        LambdaClass::Zero
    } else {
        let rs: Vec<f64> = lrs.iter().map(|lr| lr.exp()).collect();
        let acc = aitken_sequence(&rs);
        let hi = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = acc.iter().copied().fold(f64::INFINITY, f64::min);
        let value = acc[acc.len() - 1];
        let spread = hi - lo;
        let raw_last = rs[rs.len() - 1];
        if value > 0.0 && spread.is_finite() && spread <= FINITE_SPREAD * value {
            let uncertainty = (0.5 * spread).max((value - raw_last).abs()).max(1e-12 * value);
            LambdaClass::Finite { value, uncertainty }
        } else {
            LambdaClass::Inconclusive
        }
    };
    Ok(LambdaEstimate {
        class,
        series,
        tail_slope: slope,
    })
}

/// Least-squares slope of `y` against `log u`.
fn regression_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (sx, sy, sxx, sxy) = points.iter().fold((0.0, 0.0, 0.0, 0.0), |acc, &(u, y)| {
        let x = u.ln();
        (acc.0 + x, acc.1 + y, acc.2 + x * x, acc.3 + x * y)
    });
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RvDiagnostic {
    pub series: DiagnosticSeries,
    pub limit: LimitEstimate,
    /// `Some(true)` when the extrapolated ratio is within tolerance of 1.
    /// `None` when the diagnostic is inconclusive.
    pub consistent_with_rv0: Option<bool>,
}

/// Ratio `f'(sigma x) / f'(x)` along the grid; slowly varying `f'` sends it to 1.
pub fn check_rv_index_fprime(
    f: &Nonlinearity,
    sigma: f64,
    grid: &LogGrid,
    tolerance: f64,
) -> Result<RvDiagnostic, NonlinearityError> {
    positive("rv-check", "sigma", sigma)?;
    grid.validate()?;
    let shift = sigma.ln();
    let samples: Vec<Sample> = grid
        .points()
        .into_iter()
        .map(|u| Sample {
            t: u,
            value: (f.log_derivative_at_log(u + shift) - f.log_derivative_at_log(u)).exp(),
            ell: u,
        })
        .collect();
    let inconclusive_series = || {
        DiagnosticSeries::new("fprime-ratio", Vec::new()).expect("empty series is valid")
    };
    if samples.iter().any(|s| !s.value.is_finite()) {
        return Ok(RvDiagnostic {
            series: inconclusive_series(),
            limit: LimitEstimate::inconclusive(Model::LogFit, 0, f64::NAN),
            consistent_with_rv0: None,
        });
    }
    let series = DiagnosticSeries::new("fprime-ratio", samples)
        .expect("grid is increasing and values are finite")
        .with_meta("sigma", sigma)
        .with_meta("nonlinearity", f.descriptor());
    let limit = extrapolate_limit(&series, Model::LogFit).expect("grid has at least 8 points");
    let consistent_with_rv0 = limit
        .is_conclusive()
        .then(|| (limit.estimate - 1.0).abs() <= tolerance);
    Ok(RvDiagnostic {
        series,
        limit,
        consistent_with_rv0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn damped(alpha: f64) -> Nonlinearity {
        Nonlinearity::log_damped(alpha).unwrap()
    }

    #[test]
    fn log_damped_point_values() {
        assert_relative_eq!(damped(1.0).value(0.0), 1.0 / 2f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(damped(1.0).monotone_threshold(), std::f64::consts::E - 2.0);
        // Reference: 50-digit evaluation of log((e^100 + 1) / log^2(2 + e^100)).
        let reference = 90.789_659_628_023_817;
        assert!((damped(2.0).log_value(100.0) - reference).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert_eq!(Nonlinearity::log_damped(0.0), Err(NonlinearityError::InvalidAlpha(0.0)));
        assert!(Nonlinearity::log_damped(-1.0).is_err());
        assert!(Nonlinearity::power(1.0, 1.5, 1.0).is_err());
        assert!(Nonlinearity::linear(0.0).is_err());
    }

    fn all_families() -> Vec<Nonlinearity> {
        vec![
            damped(0.5),
            damped(1.0),
            damped(2.0),
            Nonlinearity::power(1.0, 0.5, 1.0).unwrap(),
            Nonlinearity::power(2.0, 0.0, 1.0).unwrap(),
            Nonlinearity::linear(1.0).unwrap(),
            Nonlinearity::constant(3.0).unwrap(),
            Nonlinearity::critical(1.5).unwrap(),
        ]
    }

    #[test]
    fn log_channel_matches_direct_evaluation() {
        for f in all_families() {
            for k in 0..=100 {
                let u = 5.0 * k as f64;
                let direct = f.value(u.exp()).ln();
                assert!(
                    (f.log_value(u) - direct).abs() <= 1e-10,
                    "{} at u={u}: {} vs {direct}",
                    f.descriptor(),
                    f.log_value(u)
                );
            }
        }
    }

    #[test]
    fn log_derivative_channel_matches_direct_evaluation() {
        for f in all_families() {
            for k in 0..=60 {
                let u = 0.5 * k as f64;
                let direct = f.derivative(u.exp());
                let via_log = f.derivative_at_log(u);
                if direct == 0.0 {
                    assert_eq!(via_log, 0.0);
                } else {
                    assert_relative_eq!(via_log, direct, max_relative = 1e-9);
                }
            }
        }
    }

    #[test]
    fn log_channel_is_finite_at_huge_arguments() {
        for f in all_families() {
            let v = f.log_value(1e6);
            assert!(v.is_finite(), "{}", f.descriptor());
        }
        assert_relative_eq!(damped(1.0).log_value(1e6), 1e6 - 1e6f64.ln(), max_relative = 1e-15);
    }

    #[test]
    fn derivative_matches_central_differences_at_second_order() {
        for f in all_families() {
            for i in 0..10 {
                let x = 0.3 + 1.7f64.powi(i);
                let err = |h: f64| {
                    ((f.value(x + h) - f.value(x - h)) / (2.0 * h) - f.derivative(x)).abs()
                };
                let h = 1e-2 * x.max(1.0);
                let (e1, e2) = (err(h), err(h / 2.0));
                if e1 < 1e-11 {
                    continue;
                }
                let ratio = e1 / e2;
                assert!(ratio > 3.5 && ratio < 4.5, "{} x={x}: {ratio}", f.descriptor());
            }
        }
    }

    #[test]
    fn log_damped_family_increasing_beyond_threshold() {
        for alpha in [0.5, 1.0, 2.0, 3.0] {
            let f = damped(alpha);
            let x1 = f.monotone_threshold().max(0.0);
            for x in geometric_grid(x1 + 1e-3, 1e300, 400) {
                assert!(f.derivative(x) > 0.0, "alpha={alpha} x={x}");
            }
        }
    }

    #[test]
    fn fprime_vanishes_along_geometric_grid() {
        for alpha in [0.5, 1.0, 2.0] {
            let f = damped(alpha);
            let d: Vec<f64> = [1e1, 1e2, 1e3, 1e4].iter().map(|&u| f.derivative_at_log(u)).collect();
            assert!(d.windows(2).all(|w| w[1] < w[0]));
            assert!(d[3] < 0.02 && d[3] < 0.1 * d[0]);
        }
    }

    #[test]
    fn lambda_regimes_of_log_damped_family() {
        let grid = LogGrid::default();
        assert_eq!(estimate_lambda(&damped(2.0), &grid).unwrap().class, LambdaClass::Zero);
        assert_eq!(estimate_lambda(&damped(0.5), &grid).unwrap().class, LambdaClass::Infinite);
        match estimate_lambda(&damped(1.0), &grid).unwrap().class {
            LambdaClass::Finite { value, .. } => assert!((value - 1.0).abs() < 0.01, "{value}"),
            other => panic!("expected finite, got {other}"),
        }
    }

    #[test]
    fn lambda_of_critical_family_is_within_reported_uncertainty() {
        for c in [0.25, 1.0, 3.0] {
            let est = estimate_lambda(&Nonlinearity::critical(c).unwrap(), &LogGrid::default()).unwrap();
            match est.class {
                LambdaClass::Finite { value, uncertainty } => {
                    assert!((value - c).abs() <= uncertainty, "c={c}: {value} +/- {uncertainty}")
                }
                other => panic!("expected finite, got {other}"),
            }
        }
    }

    #[test]
    fn lambda_special_cases() {
        let grid = LogGrid::default();
        let bounded = estimate_lambda(&Nonlinearity::constant(2.0).unwrap(), &grid).unwrap();
        assert_eq!(bounded.class, LambdaClass::BoundedF);
        let linear = estimate_lambda(&Nonlinearity::linear(1.0).unwrap(), &grid).unwrap();
        assert_eq!(linear.class, LambdaClass::Infinite);
        let sqrt = estimate_lambda(&Nonlinearity::power(1.0, 0.5, 1.0).unwrap(), &grid).unwrap();
        assert_eq!(sqrt.class, LambdaClass::Zero);
        // Close to critical: no honest verdict inside the last decade.
        let near = estimate_lambda(&damped(1.02), &grid).unwrap();
        assert_eq!(near.class, LambdaClass::Inconclusive);
    }

    #[test]
    fn lambda_grid_must_span_three_decades() {
        let err = estimate_lambda(&damped(1.0), &LogGrid { u_min: 10.0, u_max: 1e3, points: 20 });
        assert!(matches!(err, Err(NonlinearityError::InvalidGrid { .. })));
    }

    #[test]
    fn rv_index_of_fprime() {
        let grid = LogGrid::default();
        let p = check_rv_index_fprime(&damped(1.0), 2.0, &grid, 0.01).unwrap();
        assert_eq!(p.consistent_with_rv0, Some(true));
        assert!((p.limit.estimate - 1.0).abs() < 1e-3);

        let lin = check_rv_index_fprime(&Nonlinearity::linear(1.0).unwrap(), 2.0, &grid, 0.01).unwrap();
        assert!(lin.series.values().all(|v| v == 1.0));
        assert_eq!(lin.consistent_with_rv0, Some(true));

        let sqrt = Nonlinearity::power(1.0, 0.5, 1.0).unwrap();
        let s = check_rv_index_fprime(&sqrt, 2.0, &LogGrid::new(1.0, 1e3, 30).unwrap(), 0.01).unwrap();
        assert_relative_eq!(s.limit.estimate, 0.5f64.sqrt(), max_relative = 1e-6);
        assert_eq!(s.consistent_with_rv0, Some(false));

        let constant = Nonlinearity::constant(1.0).unwrap();
        let c = check_rv_index_fprime(&constant, 2.0, &grid, 0.01).unwrap();
        assert_eq!(c.consistent_with_rv0, None);
    }

    #[test]
    fn perturbation_validation() {
        let f = damped(1.0);
        Perturbation::ScaledFfPrime { c: 0.5 }.validate_against(&f, 1e3).unwrap();
        Perturbation::ScaledFfPrime { c: 2.0 }.validate_against(&f, 1e3).unwrap();
        let err = Perturbation::ScaledFfPrime { c: 3.0 }.validate_against(&f, 1e3).unwrap_err();
        assert!(matches!(err, NonlinearityError::PerturbationOutOfRange { .. }));
        assert!(Perturbation::Proportional { kappa: 1.0 }.validate_against(&f, 1e3).is_err());
        Perturbation::Proportional { kappa: 1e-30 }.validate_against(&f, 1e3).unwrap();
    }
}
