use serde::{Deserialize, Serialize};

use super::{delta_series, f_over_t_series, ratio_series, AsymptoticsError, DeltaSeries, Outcome, SeriesGrid, TheoremVerdict};
use crate::integrator::{solve_fde, HistoryFunction, StepControl, Trajectory};
use crate::limits::{extrapolate_limit, DiagnosticSeries, LimitEstimate, Model};
use crate::measure::DelayMeasure;
use crate::nonlinearity::{estimate_lambda, LambdaClass, LogGrid, Nonlinearity};
use crate::rate_transform::RateTransform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthTolerances {
    /// Relative tolerance on `x(t) / F^{-1}(M t)`.
    pub ratio: f64,
    /// Relative tolerance on `F(x(t)) / t` against `M`.
    pub f_over_t: f64,
    /// Relative tolerance on the normalised delay defect against 1.
    pub delta: f64,
    /// Upper bound on the last ratio value when the limit is 0.
    pub decay_threshold: f64,
}

impl Default for GrowthTolerances {
    fn default() -> Self {
        Self {
            ratio: 0.10,
            f_over_t: 0.02,
            delta: 0.15,
            decay_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthSettings {
    pub horizon: f64,
    pub step: StepControl,
    pub grid: SeriesGrid,
    pub model: Model,
    pub tolerances: GrowthTolerances,
    pub lambda_grid: LogGrid,
    /// Replaces the estimated `lambda` class in the prediction.
    pub lambda_override: Option<LambdaClass>,
}

impl Default for GrowthSettings {
    fn default() -> Self {
        Self {
            horizon: 1e3,
            step: StepControl::default(),
            grid: SeriesGrid::default(),
            model: Model::LogFit,
            tolerances: GrowthTolerances::default(),
            lambda_grid: LogGrid::default(),
            lambda_override: None,
        }
    }
}

/// Everything produced by [`verify_growth_limit`].
#[derive(Debug, Clone)]
pub struct TheoremRun {
    pub trajectory: Trajectory,
    pub lambda: LambdaClass,
    pub ratio: DiagnosticSeries,
    pub ratio_limit: LimitEstimate,
    pub verdict: TheoremVerdict,
    pub f_over_t: DiagnosticSeries,
    pub f_over_t_limit: LimitEstimate,
    pub f_over_t_verdict: TheoremVerdict,
    pub delta: DeltaSeries,
    pub delta_limit: Option<LimitEstimate>,
    pub delta_verdict: Option<TheoremVerdict>,
}

impl TheoremRun {
    pub fn verdicts(&self) -> Vec<&TheoremVerdict> {
        let mut v = vec![&self.verdict, &self.f_over_t_verdict];
        v.extend(self.delta_verdict.as_ref());
        v
    }
}

fn limit_verdict(check: &str, regime: &str, predicted: f64, limit: &LimitEstimate, tolerance: f64) -> TheoremVerdict {
    if limit.is_conclusive() {
        TheoremVerdict::relative(check, regime, predicted, limit.estimate, limit.uncertainty, tolerance)
    } else {
        TheoremVerdict::inconclusive(check, regime, predicted, limit.estimate, "extrapolation did not converge")
    }
}

/// Integrates the delay equation and compares `x(t) / F^{-1}(M t)` with
/// `exp(-lambda C)`, alongside `F(x(t))/t -> M` and the normalised defect.
///
/// For `lambda = infinity` the limit is 0, which no finite run reaches: the
/// verdict instead requires the tail of the ratio to decrease and end below
/// the decay threshold.
pub fn verify_growth_limit(
    f: &Nonlinearity,
    m: &DelayMeasure,
    psi: &HistoryFunction,
    settings: &GrowthSettings,
) -> Result<TheoremRun, AsymptoticsError> {
    let lambda = match settings.lambda_override {
        Some(class) => class,
        None => estimate_lambda(f, &settings.lambda_grid)?.class,
    };
    let trajectory = solve_fde(f, m, psi, settings.horizon, &settings.step)?;
    let rt = RateTransform::new(*f);
    let grid = settings.grid.times(settings.horizon)?;
    let mass = m.total_mass();
    let c = m.delay_moment();
    let tol = &settings.tolerances;

    let ratio = ratio_series(&trajectory, &rt, mass, &grid)?.with_meta("lambda", lambda);
    let ratio_limit = extrapolate_limit(&ratio, settings.model)?;
    let check = "growth-limit";
    let tail_len = ratio.len() - ratio.len() / 2;
    let verdict = match lambda {
        LambdaClass::Zero => limit_verdict(check, "lambda=0", 1.0, &ratio_limit, tol.ratio),
        LambdaClass::Finite { value, .. } => {
            let v = limit_verdict(check, &format!("lambda={value:.6}"), (-value * c).exp(), &ratio_limit, tol.ratio);
            if ratio.tail_monotone(tail_len) {
                v
            } else {
                v.with_note("ratio tail is not monotone; the step size may be too coarse")
            }
        }
        LambdaClass::Infinite => {
            let last = ratio.last().map_or(f64::NAN, |s| s.value);
            let decreasing = ratio.tail_decreasing(tail_len);
            let deviation = if decreasing { last } else { f64::INFINITY };
            TheoremVerdict {
                check: check.to_owned(),
                regime: "lambda=infinity".to_owned(),
                predicted: 0.0,
                estimated: last,
                uncertainty: f64::NAN,
                deviation,
                tolerance: tol.decay_threshold,
                outcome: if deviation <= tol.decay_threshold { Outcome::Pass } else { Outcome::Fail },
                notes: vec!["limit 0: checks that the ratio tail decreases and ends below the threshold".to_owned()],
            }
        }
        LambdaClass::BoundedF => TheoremVerdict {
            check: check.to_owned(),
            regime: "bounded-f".to_owned(),
            predicted: 1.0,
            estimated: ratio_limit.estimate,
            uncertainty: ratio_limit.uncertainty,
            deviation: 0.0,
            tolerance: tol.ratio,
            outcome: Outcome::Trivial,
            notes: vec!["f has a finite limit; the comparison is trivial".to_owned()],
        },
        LambdaClass::Inconclusive => TheoremVerdict::inconclusive(
            check,
            "lambda=inconclusive",
            f64::NAN,
            ratio_limit.estimate,
            "lambda could not be classified",
        ),
    };

    let f_over_t = f_over_t_series(&trajectory, &rt, &grid)?;
    let f_over_t_limit = extrapolate_limit(&f_over_t, settings.model)?;
    let f_over_t_verdict = limit_verdict("f-over-t", "any", mass, &f_over_t_limit, tol.f_over_t);

    let delta = delta_series(&trajectory, f, m, &grid)?;
    let (delta_limit, delta_verdict) = match &delta {
        DeltaSeries::Degenerate | DeltaSeries::FlatNonlinearity => (None, None),
        DeltaSeries::Series(s) => {
            let limit = extrapolate_limit(s, settings.model)?;
            let verdict = limit_verdict("delay-defect", "any", 1.0, &limit, tol.delta);
            (Some(limit), Some(verdict))
        }
    };

    Ok(TheoremRun {
        trajectory,
        lambda,
        ratio,
        ratio_limit,
        verdict,
        f_over_t,
        f_over_t_limit,
        f_over_t_verdict,
        delta,
        delta_limit,
        delta_verdict,
    })
}
