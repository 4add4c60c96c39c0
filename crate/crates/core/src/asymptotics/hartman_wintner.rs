use serde::{Deserialize, Serialize};

use super::{AsymptoticsError, Outcome, SeriesGrid, TheoremVerdict};
use crate::integrator::{solve_ode, solve_perturbed_ode, StepControl, Trajectory};
use crate::limits::{extrapolate_limit, geometric_grid, log_log_slope, DiagnosticSeries, LimitEstimate, LimitStatus, Model, Sample};
use crate::nonlinearity::{Nonlinearity, Perturbation};
use crate::quadrature::AdaptiveQuadrature;

const ZERO_LEVEL: f64 = 1e-12;
const DIVERGENCE_SLOPE: f64 = 0.25;
const MU_POINTS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HwMuStatus {
    Zero,
    Finite,
    /// The defining limit is infinite, outside the comparison's scope.
    Divergent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HwMu {
    /// `(f(x)/x) * integral from 0 to x of eps/f^2` against `u = log x`.
    pub series: DiagnosticSeries,
    pub limit: LimitEstimate,
    pub status: HwMuStatus,
}

/// hw-mu `= lim (f(x)/x) * integral from 0 to x of eps(w)/f(w)^2 dw`, sampled
/// on a geometric grid in `u = log x` ending at `u_max`.
///
/// The integral is split at `x = 1`: below, plain quadrature in `x`; above,
/// quadrature in `w = log x` of `(eps/f)(e^w) * exp(w - log f(e^w))`.
pub fn compute_hw_mu(f: &Nonlinearity, eps: &Perturbation, u_max: f64) -> Result<HwMu, AsymptoticsError> {
    eps.validate_against(f, u_max)?;
    let quad = AdaptiveQuadrature::new(1e-10);
    let near_zero = quad
        .integrate(|x| eps.relative(f, x) / f.value(x), 0.0, 1.0)
        .map_err(|e| AsymptoticsError::Hypothesis(format!("quadrature of eps/f^2 on [0, 1] failed: {e}")))?;
    let integrand = |w: f64| eps.relative_at_log(f, w) * (w - f.log_value(w)).exp();

    let grid = geometric_grid((u_max / 1e3).max(1.0), u_max, MU_POINTS);
    let mut integral = near_zero;
    let mut prev = 0.0;
    let mut samples = Vec::with_capacity(grid.len());
    for u in grid {
        integral += quad
            .integrate(integrand, prev, u)
            .map_err(|e| AsymptoticsError::Hypothesis(format!("quadrature of eps/f^2 failed: {e}")))?;
        prev = u;
        samples.push(Sample {
            t: u,
            value: (f.log_value(u) - u).exp() * integral,
            ell: u,
        });
    }
    let series = DiagnosticSeries::new("hw-mu", samples)?
        .with_meta("nonlinearity", f.descriptor())
        .with_meta("perturbation", format!("{eps:?}"));

    if series.values().all(|v| v.abs() < ZERO_LEVEL) {
        let limit = LimitEstimate {
            estimate: 0.0,
            uncertainty: series.values().fold(0.0, |m: f64, v| m.max(v.abs())),
            model: Model::Raw,
            samples_used: series.len(),
            status: LimitStatus::Converged,
        };
        return Ok(HwMu {
            series,
            limit,
            status: HwMuStatus::Zero,
        });
    }
    let tail: Vec<(f64, f64)> = series.samples()[series.len() / 2..]
        .iter()
        .map(|s| (s.t, s.value))
        .collect();
    if log_log_slope(&tail) > DIVERGENCE_SLOPE {
        let limit = LimitEstimate {
            estimate: f64::INFINITY,
            uncertainty: f64::INFINITY,
            model: Model::Raw,
            samples_used: tail.len(),
            status: LimitStatus::Divergent,
        };
        return Ok(HwMu {
            series,
            limit,
            status: HwMuStatus::Divergent,
        });
    }
    let limit = extrapolate_limit(&series, Model::LogFit)?;
    Ok(HwMu {
        series,
        limit,
        status: HwMuStatus::Finite,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HwSettings {
    pub horizon: f64,
    pub step: StepControl,
    pub grid: SeriesGrid,
    pub model: Model,
    /// Relative tolerance on `x(t)/y(t)` against `exp(-hw_mu)`.
    pub tolerance: f64,
    /// Last `u = log x` used for hw-mu.
    pub mu_u_max: f64,
}

impl Default for HwSettings {
    fn default() -> Self {
        Self {
            horizon: 1e3,
            step: StepControl::default(),
            grid: SeriesGrid::default(),
            model: Model::LogFit,
            tolerance: 0.10,
            mu_u_max: 1e4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HwExperiment {
    pub x: Trajectory,
    pub y: Trajectory,
    /// `x(t)/y(t)`.
    pub ratio: DiagnosticSeries,
    pub ratio_limit: LimitEstimate,
    pub mu: HwMu,
    pub verdict: TheoremVerdict,
}

/// Solves `x' = f(x) - eps(x)` and `y' = f(y)` and compares `x(t)/y(t)` with
/// `exp(-hw_mu)`.
pub fn hw_experiment(
    f: &Nonlinearity,
    eps: &Perturbation,
    x0: f64,
    y0: f64,
    settings: &HwSettings,
) -> Result<HwExperiment, AsymptoticsError> {
    let sublinear = (f.log_value(settings.mu_u_max) - settings.mu_u_max).exp();
    if !(sublinear < 1e-2) {
        return Err(AsymptoticsError::Hypothesis(format!(
            "f(x)/x = {sublinear:.3e} at log x = {}; f must be sublinear",
            settings.mu_u_max
        )));
    }
    let mu = compute_hw_mu(f, eps, settings.mu_u_max)?;
    let x = solve_perturbed_ode(f, eps, x0, settings.horizon, &settings.step)?;
    let y = solve_ode(f, 1.0, y0, settings.horizon, &settings.step)?;
    let grid = settings.grid.times(settings.horizon)?;
    let mut samples = Vec::with_capacity(grid.len());
    for &t in &grid {
        let vy = y.log_value(t)?;
        samples.push(Sample {
            t,
            value: (x.log_value(t)? - vy).exp(),
            ell: vy,
        });
    }
    let ratio = DiagnosticSeries::new("hw-ratio", samples)?
        .with_meta("nonlinearity", f.descriptor())
        .with_meta("perturbation", format!("{eps:?}"));
    let ratio_limit = extrapolate_limit(&ratio, settings.model)?;

    let check = "perturbed-ode-ratio";
    let verdict = match mu.status {
        HwMuStatus::Divergent => TheoremVerdict::inconclusive(
            check,
            "hw-mu=infinity",
            0.0,
            ratio_limit.estimate,
            "hw-mu = infinity (outside theorem scope)",
        ),
        _ if !mu.limit.is_conclusive() => {
            TheoremVerdict::inconclusive(check, "hw-mu=inconclusive", f64::NAN, ratio_limit.estimate, "hw-mu did not converge")
        }
        _ if !ratio_limit.is_conclusive() => TheoremVerdict::inconclusive(
            check,
            &format!("hw-mu={:.6}", mu.limit.estimate),
            (-mu.limit.estimate).exp(),
            ratio_limit.estimate,
            "ratio extrapolation did not converge",
        ),
        _ => TheoremVerdict::relative(
            check,
            &format!("hw-mu={:.6}", mu.limit.estimate),
            (-mu.limit.estimate).exp(),
            ratio_limit.estimate,
            ratio_limit.uncertainty,
            settings.tolerance,
        ),
    };
    debug_assert!(verdict.outcome != Outcome::Trivial);
    Ok(HwExperiment {
        x,
        y,
        ratio,
        ratio_limit,
        mu,
        verdict,
    })
}
