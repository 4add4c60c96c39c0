//! Diagnostic time series and numerical stand-ins for `t -> infinity` limits.
//!
//! Each sample carries a log-scale abscissa `ell`: the logarithm of whatever
//! quantity drives the slow convergence of the series (by default `log t`;
//! for series built from a trajectory, `log x(t)`). The [`Model::LogFit`]
//! extrapolation regresses on powers of `1/ell`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_SAMPLES: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeriesError {
    #[error("series `{name}`: times must be strictly increasing (sample {index})")]
    NonIncreasingTime { name: String, index: usize },
    #[error("series `{name}`: non-finite value at t = {t}")]
    NonFiniteValue { name: String, t: f64 },
    #[error("series `{name}` has {len} samples; extrapolation needs at least {MIN_SAMPLES}")]
    TooShort { name: String, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub value: f64,
    /// Log-scale abscissa used by the log-fit model.
    pub ell: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSeries {
    name: String,
    samples: Vec<Sample>,
    pub metadata: BTreeMap<String, String>,
}

impl DiagnosticSeries {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Result<Self, SeriesError> {
        let name = name.into();
        for (index, w) in samples.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(SeriesError::NonIncreasingTime {
                    name,
                    index: index + 1,
                });
            }
        }
        if let Some(s) = samples.iter().find(|s| !s.value.is_finite()) {
            return Err(SeriesError::NonFiniteValue { name, t: s.t });
        }
        Ok(Self {
            name,
            samples,
            metadata: BTreeMap::new(),
        })
    }

    /// Series whose log-scale abscissa is `log t`.
    pub fn from_times(
        name: impl Into<String>,
        times: &[f64],
        values: &[f64],
    ) -> Result<Self, SeriesError> {
        let samples = times
            .iter()
            .zip(values)
            .map(|(&t, &value)| Sample { t, value, ell: t.ln() })
            .collect();
        Self::new(name, samples)
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_owned(), value.to_string());
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.value)
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// True when the last `n` values are strictly decreasing.
    pub fn tail_decreasing(&self, n: usize) -> bool {
        let start = self.samples.len().saturating_sub(n);
        self.samples[start..].windows(2).all(|w| w[1].value < w[0].value)
    }

    /// True when the last `n` values are monotone in either direction.
    pub fn tail_monotone(&self, n: usize) -> bool {
        let start = self.samples.len().saturating_sub(n);
        let tail = &self.samples[start..];
        tail.windows(2).all(|w| w[1].value <= w[0].value)
            || tail.windows(2).all(|w| w[1].value >= w[0].value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    /// Last value; uncertainty is the half-spread of the last three.
    Raw,
    /// Aitken delta-squared acceleration of the tail.
    Aitken,
    /// Least squares `L + a/ell + b*log(ell)/ell` over the tail.
    #[default]
    LogFit,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Raw => "raw",
            Self::Aitken => "aitken",
            Self::LogFit => "log-fit",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitStatus {
    Converged,
    /// No contraction detected; the estimate carries infinite uncertainty.
    Inconclusive,
    /// The series grows without bound.
    Divergent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitEstimate {
    pub estimate: f64,
    pub uncertainty: f64,
    pub model: Model,
    pub samples_used: usize,
    pub status: LimitStatus,
}

impl LimitEstimate {
    pub fn is_conclusive(&self) -> bool {
        self.status == LimitStatus::Converged
    }

    pub fn inconclusive(model: Model, samples_used: usize, estimate: f64) -> Self {
        Self {
            estimate,
            uncertainty: f64::INFINITY,
            model,
            samples_used,
            status: LimitStatus::Inconclusive,
        }
    }
}

pub fn extrapolate_limit(series: &DiagnosticSeries, model: Model) -> Result<LimitEstimate, SeriesError> {
    let n = series.len();
    if n < MIN_SAMPLES {
        return Err(SeriesError::TooShort {
            name: series.name.clone(),
            len: n,
        });
    }
    let values: Vec<f64> = series.values().collect();
    let tail_start = n / 2;
    if oscillates_without_contraction(&values[tail_start..]) {
        return Ok(LimitEstimate::inconclusive(model, n - tail_start, values[n - 1]));
    }
    let est = match model {
        Model::Raw => {
            let last3 = &values[n - 3..];
            let hi = last3.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = last3.iter().copied().fold(f64::INFINITY, f64::min);
            LimitEstimate {
                estimate: values[n - 1],
                uncertainty: 0.5 * (hi - lo),
                model,
                samples_used: 3,
                status: LimitStatus::Converged,
            }
        }
        Model::Aitken => {
            let acc = aitken_sequence(&values[tail_start..]);
            let last = acc[acc.len() - 1];
            let prev = acc[acc.len() - 2];
            LimitEstimate {
                estimate: last,
                uncertainty: (last - prev).abs(),
                model,
                samples_used: n - tail_start,
                status: LimitStatus::Converged,
            }
        }
        Model::LogFit => log_fit(&series.samples[tail_start..]),
    };
    Ok(est)
}

/// Aitken delta-squared transform of consecutive triples. Triples with a
/// vanishing second difference pass their last value through unchanged.
pub fn aitken_sequence(values: &[f64]) -> Vec<f64> {
    values
        .windows(3)
        .map(|w| {
            let d1 = w[1] - w[0];
            let d2 = w[2] - w[1];
            let dd = d2 - d1;
            let scale = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if dd.abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
                w[2]
            } else {
                w[2] - d2 * d2 / dd
            }
        })
        .collect()
}

fn oscillates_without_contraction(tail: &[f64]) -> bool {
    let diffs: Vec<f64> = tail.windows(2).map(|w| w[1] - w[0]).collect();
    if diffs.len() < 3 {
        return false;
    }
    let scale = tail.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if diffs.iter().all(|d| d.abs() <= 1e-14 * scale) {
        return false;
    }
    let flips = diffs
        .windows(2)
        .filter(|w| w[0] * w[1] < 0.0)
        .count();
    let mostly_alternating = flips * 5 >= (diffs.len() - 1) * 4;
    let first = diffs[..2].iter().map(|d| d.abs()).fold(0.0, f64::max);
    let last = diffs[diffs.len() - 2..].iter().map(|d| d.abs()).fold(0.0, f64::max);
    mostly_alternating && last >= 0.5 * first
}

struct FitResult {
    coeffs: DVector<f64>,
    intercept_se: f64,
}

fn least_squares(samples: &[Sample], with_log_term: bool) -> Option<FitResult> {
    let cols = if with_log_term { 3 } else { 2 };
    let rows = samples.len();
    if rows < cols {
        return None;
    }
    let a = DMatrix::from_fn(rows, cols, |i, j| {
        let ell = samples[i].ell;
        match j {
            0 => 1.0,
            1 => 1.0 / ell,
            _ => ell.ln() / ell,
        }
    });
    let y = DVector::from_iterator(rows, samples.iter().map(|s| s.value));
    let svd = a.clone().svd(true, true);
    let coeffs = svd.solve(&y, 1e-13).ok()?;
    let resid = &y - &a * &coeffs;
    let dof = rows.saturating_sub(cols);
    let intercept_se = if dof == 0 {
        0.0
    } else {
        let sigma2 = resid.norm_squared() / dof as f64;
        let ata = a.transpose() * &a;
        ata.try_inverse()
            .map(|inv| (sigma2 * inv[(0, 0)]).max(0.0).sqrt())
            .unwrap_or(f64::INFINITY)
    };
    coeffs
        .iter()
        .all(|c| c.is_finite())
        .then_some(FitResult { coeffs, intercept_se })
}

fn log_fit(tail: &[Sample]) -> LimitEstimate {
    let usable: Vec<Sample> = tail.iter().copied().filter(|s| s.ell > 0.0 && s.ell.is_finite()).collect();
    let k = usable.len();
    let with_log = k >= 4;
    let Some(full) = least_squares(&usable, with_log) else {
        return LimitEstimate::inconclusive(Model::LogFit, k, tail.last().map_or(f64::NAN, |s| s.value));
    };
    let estimate = full.coeffs[0];
    // Refit on the later part of the tail; the drift measures model bias.
    let sub_start = k / 3;
    let drift = least_squares(&usable[sub_start..], with_log && k - sub_start >= 4)
        .map(|sub| (sub.coeffs[0] - estimate).abs())
        .unwrap_or(0.0);
    let uncertainty = full.intercept_se.max(drift) + 1e-12 * estimate.abs();
    LimitEstimate {
        estimate,
        uncertainty,
        model: Model::LogFit,
        samples_used: k,
        status: LimitStatus::Converged,
    }
}

/// `points` values geometrically spaced on `[start, end]`, both included.
pub fn geometric_grid(start: f64, end: f64, points: usize) -> Vec<f64> {
    assert!(start > 0.0 && end > start && points >= 2, "invalid geometric grid");
    let ratio = (end / start).ln() / (points - 1) as f64;
    (0..points)
        .map(|i| {
            if i == points - 1 {
                end
            } else {
                start * (ratio * i as f64).exp()
            }
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (sx, sy, sxx, sxy) = points.iter().fold((0.0, 0.0, 0.0, 0.0), |acc, &(x, y)| {
        let (lx, ly) = (x.ln(), y.ln());
        (acc.0 + lx, acc.1 + ly, acc.2 + lx * lx, acc.3 + lx * ly)
    });
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn series(times: &[f64], f: impl Fn(f64) -> f64) -> DiagnosticSeries {
        let values: Vec<f64> = times.iter().map(|&t| f(t)).collect();
        DiagnosticSeries::from_times("test", times, &values).unwrap()
    }

    #[test]
    fn constant_series_all_models() {
        let times = geometric_grid(1.0, 1e3, 12);
        let s = series(&times, |_| 0.75);
        for model in [Model::Raw, Model::Aitken, Model::LogFit] {
            let est = extrapolate_limit(&s, model).unwrap();
            assert_relative_eq!(est.estimate, 0.75, epsilon = 1e-14);
            assert!(est.uncertainty < 1e-11, "{model}: {}", est.uncertainty);
            assert!(est.is_conclusive());
        }
    }

    #[test]
    fn aitken_is_exact_on_geometric_sequences() {
        let times: Vec<f64> = (1..=12).map(|i| i as f64).collect();
        let s = series(&times, |n| 0.3 + 0.5f64.powf(n));
        let est = extrapolate_limit(&s, Model::Aitken).unwrap();
        assert_relative_eq!(est.estimate, 0.3, epsilon = 1e-14);
        assert!(est.uncertainty < 1e-14);
    }

    #[test]
    fn log_fit_recovers_inverse_log_series() {
        let times = geometric_grid(1e2, 1e5, 30);
        let s = series(&times, |t| 0.3679 + 0.8 / t.ln());
        let est = extrapolate_limit(&s, Model::LogFit).unwrap();
        assert!((est.estimate - 0.3679).abs() < 1e-3);
        assert!((est.estimate - 0.3679).abs() < 1e-10);
    }

    #[test]
    fn log_fit_handles_second_order_term() {
        let times = geometric_grid(10.0, 1e6, 40);
        let s = series(&times, |t| 2.0 - 1.5 / t.ln() + 0.7 * t.ln().ln() / t.ln());
        let est = extrapolate_limit(&s, Model::LogFit).unwrap();
        assert_relative_eq!(est.estimate, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn oscillating_tail_is_inconclusive() {
        let times: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let s = series(&times, |n| if (n as i64) % 2 == 0 { 1.0 } else { -1.0 });
        for model in [Model::Raw, Model::Aitken, Model::LogFit] {
            let est = extrapolate_limit(&s, model).unwrap();
            assert_eq!(est.status, LimitStatus::Inconclusive);
            assert!(est.uncertainty.is_infinite());
        }
    }

    #[test]
    fn damped_oscillation_is_accepted() {
        let times: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let s = series(&times, |n| 1.0 + (-0.5f64).powf(n));
        let est = extrapolate_limit(&s, Model::Aitken).unwrap();
        assert!(est.is_conclusive());
        assert_relative_eq!(est.estimate, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn short_series_is_rejected() {
        let s = series(&[1.0, 2.0, 3.0], |t| t);
        assert!(matches!(extrapolate_limit(&s, Model::Raw), Err(SeriesError::TooShort { .. })));
    }

    #[test]
    fn series_validation() {
        let bad = DiagnosticSeries::from_times("x", &[1.0, 1.0], &[0.0, 0.0]);
        assert!(matches!(bad, Err(SeriesError::NonIncreasingTime { .. })));
        let nan = DiagnosticSeries::from_times("x", &[1.0, 2.0], &[0.0, f64::NAN]);
        assert!(matches!(nan, Err(SeriesError::NonFiniteValue { .. })));
    }

    #[test]
    fn geometric_grid_endpoints() {
        let g = geometric_grid(10.0, 1000.0, 3);
        assert_eq!(g[0], 10.0);
        assert_relative_eq!(g[1], 100.0, max_relative = 1e-14);
        assert_eq!(g[2], 1000.0);
    }
}
