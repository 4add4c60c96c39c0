//! Diagnostic series built from trajectories, their extrapolated limits, and
//! verdicts comparing those limits with the predicted asymptotic constants.

mod growth;
mod hartman_wintner;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{IntegrationError, Trajectory};
use crate::limits::{geometric_grid, DiagnosticSeries, Sample, SeriesError};
use crate::measure::{DelayMeasure, MeasureError};
use crate::nonlinearity::{Nonlinearity, NonlinearityError};
use crate::rate_transform::{RateError, RateTransform};

pub use growth::{verify_growth_limit, GrowthSettings, GrowthTolerances, TheoremRun};
pub use hartman_wintner::{compute_hw_mu, hw_experiment, HwExperiment, HwMu, HwMuStatus, HwSettings};

#[derive(Debug, Error)]
pub enum AsymptoticsError {
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("diagnostic grid must hold >= 6 points in (0, {horizon}], got start {start} with {points} points")]
    InvalidGrid { start: f64, horizon: f64, points: usize },
}

/// Geometric sampling grid `start..=end` for diagnostic series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesGrid {
    pub start: f64,
    pub points: usize,
}

impl Default for SeriesGrid {
    fn default() -> Self {
        Self {
            start: 10.0,
            points: 40,
        }
    }
}

impl SeriesGrid {
    pub fn times(&self, end: f64) -> Result<Vec<f64>, AsymptoticsError> {
        if !(self.start > 0.0 && end > self.start && end.is_finite() && self.points >= 6) {
            return Err(AsymptoticsError::InvalidGrid {
                start: self.start,
                horizon: end,
                points: self.points,
            });
        }
        Ok(geometric_grid(self.start, end, self.points))
    }
}

/// `x(t) / F^{-1}(M t)`, computed as `exp(v(t) - log F^{-1}(M t))`. The
/// log-fit abscissa is `log x(t)`.
pub fn ratio_series(
    x: &Trajectory,
    rt: &RateTransform,
    mass: f64,
    grid: &[f64],
) -> Result<DiagnosticSeries, AsymptoticsError> {
    let mut samples = Vec::with_capacity(grid.len());
    for &t in grid {
        let v = x.log_value(t)?;
        let w = rt.invert_f(mass * t)?;
        samples.push(Sample {
            t,
            value: (v - w).exp(),
            ell: v,
        });
    }
    Ok(DiagnosticSeries::new("ratio", samples)?
        .with_meta("mass", mass)
        .with_meta("nonlinearity", rt.nonlinearity().descriptor()))
}

/// `F(x(t)) / t`.
pub fn f_over_t_series(x: &Trajectory, rt: &RateTransform, grid: &[f64]) -> Result<DiagnosticSeries, AsymptoticsError> {
    let mut samples = Vec::with_capacity(grid.len());
    for &t in grid {
        let v = x.log_value(t)?;
        samples.push(Sample {
            t,
            value: rt.compute_f(v)? / t,
            ell: v,
        });
    }
    Ok(DiagnosticSeries::new("f-over-t", samples)?.with_meta("nonlinearity", rt.nonlinearity().descriptor()))
}

/// Result of [`delta_series`]: the normalised defect is undefined without delay.
#[derive(Debug, Clone, PartialEq)]
pub enum DeltaSeries {
    /// `C = 0`, so the defect vanishes identically.
    Degenerate,
    /// `f'` vanishes on the grid, so the normalisation is undefined.
    FlatNonlinearity,
    Series(DiagnosticSeries),
}

impl DeltaSeries {
    pub fn series(&self) -> Option<&DiagnosticSeries> {
        match self {
            Self::Degenerate | Self::FlatNonlinearity => None,
            Self::Series(s) => Some(s),
        }
    }
}

/// `delta(t) / (M C f(x) f'(x))` with `delta = M f(x) - x'`.
///
/// Rewritten as `(1 - x' / (M f(x))) / (C f'(x))`, whose factors are all
/// representable however large `x` gets.
pub fn delta_series(
    x: &Trajectory,
    f: &Nonlinearity,
    m: &DelayMeasure,
    grid: &[f64],
) -> Result<DeltaSeries, AsymptoticsError> {
    let c = m.delay_moment();
    if c == 0.0 {
        return Ok(DeltaSeries::Degenerate);
    }
    let log_mass = m.total_mass().ln();
    let mut samples = Vec::with_capacity(grid.len());
    for &t in grid {
        let v = x.log_value(t)?;
        let fprime = f.derivative_at_log(v);
        if fprime <= 0.0 {
            return Ok(DeltaSeries::FlatNonlinearity);
        }
        let log_dx = x.log_derivative(t)?;
        let fraction = (log_dx - log_mass - f.log_value(v)).exp();
        samples.push(Sample {
            t,
            value: (1.0 - fraction) / (c * fprime),
            ell: v,
        });
    }
    Ok(DeltaSeries::Series(
        DiagnosticSeries::new("delta-normalised", samples)?
            .with_meta("mass", m.total_mass())
            .with_meta("delay-moment", c),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Pass,
    Fail,
    Inconclusive,
    /// Bounded `f`: the comparison holds trivially and nothing is measured.
    Trivial,
}

impl Outcome {
    pub fn is_pass(self) -> bool {
        matches!(self, Self::Pass | Self::Trivial)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::Inconclusive => "inconclusive",
            Self::Trivial => "trivial",
        })
    }
}

/// Comparison of an extrapolated limit with its predicted value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremVerdict {
    pub check: String,
    pub regime: String,
    pub predicted: f64,
    pub estimated: f64,
    pub uncertainty: f64,
    /// Relative deviation; for a predicted limit of 0, the last observed value.
    pub deviation: f64,
    pub tolerance: f64,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl TheoremVerdict {
    /// Pass iff `|estimated - predicted| <= tolerance * |predicted|`.
    pub fn relative(check: &str, regime: &str, predicted: f64, estimated: f64, uncertainty: f64, tolerance: f64) -> Self {
        let deviation = ((estimated - predicted) / predicted).abs();
        let outcome = if !deviation.is_finite() {
            Outcome::Inconclusive
        } else if deviation <= tolerance {
            Outcome::Pass
        } else {
            Outcome::Fail
        };
        Self {
            check: check.to_owned(),
            regime: regime.to_owned(),
            predicted,
            estimated,
            uncertainty,
            deviation,
            tolerance,
            outcome,
            notes: Vec::new(),
        }
    }

    pub fn inconclusive(check: &str, regime: &str, predicted: f64, estimated: f64, note: impl Into<String>) -> Self {
        Self {
            check: check.to_owned(),
            regime: regime.to_owned(),
            predicted,
            estimated,
            uncertainty: f64::INFINITY,
            deviation: f64::INFINITY,
            tolerance: f64::NAN,
            outcome: Outcome::Inconclusive,
            notes: vec![note.into()],
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}
