//! Method-of-steps integration of
//! `x'(t) = integral over [-tau, 0] of f(x(t + s)) mu(ds)` and of the
//! collapsed ODE `y' = M f(y)`.
//!
//! The state is `v = log x`, so `v' = x'/x` and the right-hand side is
//! `exp(log integral of exp(log f(x(t + s))) mu(ds) - v)`, evaluated with a
//! max-shifted log-sum-exp. Steps use the classical fourth-order Runge–Kutta
//! scheme; dense output is the cubic Hermite interpolant through `(v, v')` at
//! the step ends, which is also what delayed look-ups read.

use std::cell::Cell;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measure::{DelayMeasure, MeasureError};
use crate::nonlinearity::{Nonlinearity, Perturbation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("initial value must be positive and finite, got {0}")]
    InvalidInitialValue(f64),
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("fixed step {step} exceeds tau/4 = {}", tau / 4.0)]
    StepTooLarge { step: f64, tau: f64 },
    #[error("history is not positive and finite at s = {at}")]
    InvalidHistory { at: f64 },
    #[error("step failed after t = {last_good_time} (step {step})")]
    StepFailure { last_good_time: f64, step: f64 },
    #[error("step budget of {limit} exhausted at t = {reached}")]
    TooManySteps { limit: usize, reached: f64 },
    #[error("trajectory queried at t = {t} outside [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepMode {
    Fixed,
    /// Step doubling with local error `tolerance` on `log x`.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepControl {
    /// Fixed step, or the initial step in adaptive mode.
    pub step: f64,
    pub mode: StepMode,
    /// Local error target on `log x` in adaptive mode.
    pub tolerance: f64,
    /// Extra passes when a stage needs `x` inside the current step.
    pub corrector_passes: usize,
    pub max_steps: usize,
    /// Smallest step the adaptive controller may take.
    pub min_step: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self::fixed(1.0 / 16.0)
    }
}

impl StepControl {
    pub fn fixed(step: f64) -> Self {
        Self {
            step,
            mode: StepMode::Fixed,
            tolerance: 1e-10,
            corrector_passes: 1,
            max_steps: 50_000_000,
            min_step: 1e-10,
        }
    }

    pub fn adaptive(initial_step: f64, tolerance: f64) -> Self {
        Self {
            mode: StepMode::Adaptive,
            tolerance,
            ..Self::fixed(initial_step)
        }
    }

    fn validate(&self, tau: Option<f64>) -> Result<(), IntegrationError> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(IntegrationError::InvalidStep(self.step));
        }
        if let (StepMode::Fixed, Some(tau)) = (self.mode, tau) {
            if self.step > tau / 4.0 {
                return Err(IntegrationError::StepTooLarge { step: self.step, tau });
            }
        }
        Ok(())
    }
}

/// Initial segment `psi` on `[-tau, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HistoryFunction {
    /// `psi(s) = value`
    Constant { value: f64 },
    /// `psi(s) = value * exp(rate * s)`
    Exponential { value: f64, rate: f64 },
    /// `psi(s) = value + slope * s`
    Linear { value: f64, slope: f64 },
}

impl Default for HistoryFunction {
    fn default() -> Self {
        Self::Constant { value: 1.0 }
    }
}

impl HistoryFunction {
    pub fn value(&self, s: f64) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Exponential { value, rate } => value * (rate * s).exp(),
            Self::Linear { value, slope } => value + slope * s,
        }
    }

    pub fn log_value(&self, s: f64) -> f64 {
        match *self {
            Self::Constant { value } => value.ln(),
            Self::Exponential { value, rate } => value.ln() + rate * s,
            Self::Linear { .. } => self.value(s).ln(),
        }
    }

    /// `psi'(s) / psi(s)`
    pub fn log_derivative(&self, s: f64) -> f64 {
        match *self {
            Self::Constant { .. } => 0.0,
            Self::Exponential { rate, .. } => rate,
            Self::Linear { slope, .. } => slope / self.value(s),
        }
    }

    pub fn validate(&self, tau: f64) -> Result<(), IntegrationError> {
        const SAMPLES: usize = 257;
        for k in 0..SAMPLES {
            let s = -tau * k as f64 / (SAMPLES - 1) as f64;
            let v = self.value(s);
            if !(v.is_finite() && v > 0.0) {
                return Err(IntegrationError::InvalidHistory { at: s });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    t0: f64,
    v0: f64,
    d0: f64,
    t1: f64,
    v1: f64,
    d1: f64,
}

impl Segment {
    /// Cubic Hermite value and derivative; also valid just outside `[t0, t1]`.
    #[inline]
    fn eval(&self, t: f64) -> (f64, f64) {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let v = h00 * self.v0 + h10 * h * self.d0 + h01 * self.v1 + h11 * h * self.d1;
        let dh00 = 6.0 * s2 - 6.0 * s;
        let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
        let dh01 = -6.0 * s2 + 6.0 * s;
        let dh11 = 3.0 * s2 - 2.0 * s;
        let d = (dh00 * self.v0 + dh01 * self.v1) / h + dh10 * self.d0 + dh11 * self.d1;
        (v, d)
    }
}

/// Densely evaluable solution, stored as `v = log x` and `v' = x'/x` on the mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    history: Option<HistoryFunction>,
    start: f64,
    times: Vec<f64>,
    log_values: Vec<f64>,
    log_rates: Vec<f64>,
}

impl Trajectory {
    fn new(history: Option<HistoryFunction>, start: f64, v0: f64, d0: f64) -> Self {
        Self {
            history,
            start,
            times: vec![0.0],
            log_values: vec![v0],
            log_rates: vec![d0],
        }
    }

    fn push(&mut self, t: f64, v: f64, d: f64) {
        self.times.push(t);
        self.log_values.push(v);
        self.log_rates.push(d);
    }

    fn pop(&mut self) {
        self.times.pop();
        self.log_values.pop();
        self.log_rates.pop();
    }

    /// `-tau` for delay equations, `0` for ODEs.
    pub fn start_time(&self) -> f64 {
        self.start
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("trajectory has an initial point")
    }

    /// Accepted mesh times, starting at 0.
    pub fn mesh(&self) -> &[f64] {
        &self.times
    }

    /// `log x` at the mesh times.
    pub fn mesh_log_values(&self) -> &[f64] {
        &self.log_values
    }

    /// `x'/x` at the mesh times.
    pub fn mesh_log_rates(&self) -> &[f64] {
        &self.log_rates
    }

    pub fn history(&self) -> Option<&HistoryFunction> {
        self.history.as_ref()
    }

    fn segment(&self, i: usize) -> Segment {
        Segment {
            t0: self.times[i],
            v0: self.log_values[i],
            d0: self.log_rates[i],
            t1: self.times[i + 1],
            v1: self.log_values[i + 1],
            d1: self.log_rates[i + 1],
        }
    }

    fn last_segment(&self) -> Option<Segment> {
        let n = self.times.len();
        (n >= 2).then(|| self.segment(n - 2))
    }

    // Caller guarantees start <= t <= end.
    fn eval_unchecked(&self, t: f64) -> (f64, f64) {
        if t < 0.0 {
            let h = self.history.as_ref().expect("negative time only with history");
            return (h.log_value(t), h.log_derivative(t));
        }
        let n = self.times.len();
        if n == 1 {
            return (self.log_values[0], self.log_rates[0]);
        }
        let idx = self.times.partition_point(|&m| m <= t);
        if idx >= n {
            return (self.log_values[n - 1], self.log_rates[n - 1]);
        }
        if idx > 0 && self.times[idx - 1] == t {
            return (self.log_values[idx - 1], self.log_rates[idx - 1]);
        }
        self.segment(idx.max(1) - 1).eval(t)
    }

    fn check_range(&self, t: f64) -> Result<(), IntegrationError> {
        let end = self.end_time();
        if t >= self.start && t <= end {
            Ok(())
        } else {
            Err(IntegrationError::OutOfRange {
                t,
                start: self.start,
                end,
            })
        }
    }

    /// `v(t) = log x(t)`.
    pub fn log_value(&self, t: f64) -> Result<f64, IntegrationError> {
        self.check_range(t)?;
        Ok(self.eval_unchecked(t).0)
    }

    /// `x'(t) / x(t)`.
    pub fn log_rate(&self, t: f64) -> Result<f64, IntegrationError> {
        self.check_range(t)?;
        Ok(self.eval_unchecked(t).1)
    }

    /// `log x'(t)`.
    pub fn log_derivative(&self, t: f64) -> Result<f64, IntegrationError> {
        self.check_range(t)?;
        let (v, d) = self.eval_unchecked(t);
        Ok(v + d.ln())
    }
}

/// Look-up state for stages that need `x` beyond the last accepted mesh point.
#[derive(Clone, Copy)]
enum InStep {
    /// Linear continuation from the last mesh point.
    Linear { t0: f64, v0: f64, d0: f64 },
    /// Cubic continuation or the corrected segment of the current step.
    Cubic(Segment),
}

impl InStep {
    fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Linear { t0, v0, d0 } => v0 + d0 * (t - t0),
            Self::Cubic(seg) => seg.eval(t).0,
        }
    }
}

enum Rhs<'a> {
    Autonomous(&'a dyn Fn(f64) -> f64),
    Delay {
        f: &'a Nonlinearity,
        measure: &'a DelayMeasure,
    },
}

struct Stepper<'a> {
    rhs: Rhs<'a>,
    traj: Trajectory,
    used_in_step: Cell<bool>,
}

impl Stepper<'_> {
    fn rate(&self, t: f64, v: f64, pending: &InStep) -> Result<f64, IntegrationError> {
        match &self.rhs {
            Rhs::Autonomous(rate) => Ok(rate(v)),
            Rhs::Delay { f, measure } => {
                let end = self.traj.end_time();
                let log_integral = measure.log_integrate_exp(|s| {
                    if s == 0.0 {
                        return f.log_value(v);
                    }
                    let q = t + s;
                    let vq = if q <= end {
                        self.traj.eval_unchecked(q).0
                    } else {
                        self.used_in_step.set(true);
                        pending.eval(q)
                    };
                    f.log_value(vq)
                })?;
                Ok((log_integral - v).exp())
            }
        }
    }

    fn rk4(&self, t0: f64, v0: f64, d0: f64, h: f64, pending: &InStep) -> Result<(f64, f64), IntegrationError> {
        let k1 = d0;
        let k2 = self.rate(t0 + 0.5 * h, v0 + 0.5 * h * k1, pending)?;
        let k3 = self.rate(t0 + 0.5 * h, v0 + 0.5 * h * k2, pending)?;
        let k4 = self.rate(t0 + h, v0 + h * k3, pending)?;
        let v1 = v0 + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let d1 = self.rate(t0 + h, v1, pending)?;
        Ok((v1, d1))
    }

    /// One step from the last mesh point, with predictor-corrector passes when
    /// a stage looked inside the step.
    fn step(&self, h: f64, corrector_passes: usize) -> Result<(f64, f64), IntegrationError> {
        let n = self.traj.times.len();
        let (t0, v0, d0) = (self.traj.times[n - 1], self.traj.log_values[n - 1], self.traj.log_rates[n - 1]);
        let predictor = match self.traj.last_segment() {
            Some(seg) => InStep::Cubic(seg),
            None => InStep::Linear { t0, v0, d0 },
        };
        self.used_in_step.set(false);
        let (mut v1, mut d1) = self.rk4(t0, v0, d0, h, &predictor)?;
        if self.used_in_step.get() {
            for _ in 0..corrector_passes {
                let corrected = InStep::Cubic(Segment {
                    t0,
                    v0,
                    d0,
                    t1: t0 + h,
                    v1,
                    d1,
                });
                (v1, d1) = self.rk4(t0, v0, d0, h, &corrected)?;
            }
        }
        if v1.is_finite() && d1.is_finite() {
            Ok((v1, d1))
        } else {
            Err(IntegrationError::StepFailure {
                last_good_time: t0,
                step: h,
            })
        }
    }

    fn run(mut self, horizon: f64, sc: &StepControl) -> Result<Trajectory, IntegrationError> {
        match sc.mode {
            StepMode::Fixed => {
                let h = sc.step;
                let mut k: usize = 0;
                loop {
                    let t0 = self.traj.end_time();
                    if t0 >= horizon {
                        break;
                    }
                    if k >= sc.max_steps {
                        return Err(IntegrationError::TooManySteps {
                            limit: sc.max_steps,
                            reached: t0,
                        });
                    }
                    // Mesh times are k*h exactly, so atom look-backs at multiples
                    // of h land on mesh points.
                    let t1 = ((k + 1) as f64 * h).min(horizon);
                    let (v1, d1) = self.step(t1 - t0, sc.corrector_passes)?;
                    self.traj.push(t1, v1, d1);
                    k += 1;
                }
            }
            StepMode::Adaptive => {
                let tolerance = sc.tolerance;
                let mut h = sc.step;
                let mut accepted = 0usize;
                while self.traj.end_time() < horizon {
                    let t0 = self.traj.end_time();
                    if accepted >= sc.max_steps {
                        return Err(IntegrationError::TooManySteps {
                            limit: sc.max_steps,
                            reached: t0,
                        });
                    }
                    h = h.min(horizon - t0);
                    let trial = self
                        .step(h, sc.corrector_passes)
                        .and_then(|full| {
                            let (vm, dm) = self.step(0.5 * h, sc.corrector_passes)?;
                            self.traj.push(t0 + 0.5 * h, vm, dm);
                            match self.step(0.5 * h, sc.corrector_passes) {
                                Ok(half) => Ok((full, (vm, dm), half)),
                                Err(e) => {
                                    self.traj.pop();
                                    Err(e)
                                }
                            }
                        });
                    let (err, halves) = match trial {
                        Ok((full, mid, half)) => ((half.0 - full.0).abs() / 15.0, Some((mid, half))),
                        Err(_) => (f64::INFINITY, None),
                    };
                    if err <= tolerance {
                        let (_, (v1, d1)) = halves.expect("accepted step has halves");
                        self.traj.push(t0 + h, v1, d1);
                        accepted += 1;
                    } else if halves.is_some() {
                        self.traj.pop();
                    }
                    let factor = if err == 0.0 {
                        4.0
                    } else if err.is_finite() {
                        (0.9 * (tolerance / err).powf(0.2)).clamp(0.2, 4.0)
                    } else {
                        0.25
                    };
                    h *= factor;
                    if h < sc.min_step && self.traj.end_time() < horizon {
                        return Err(IntegrationError::StepFailure {
                            last_good_time: self.traj.end_time(),
                            step: h,
                        });
                    }
                }
            }
        }
        Ok(self.traj)
    }
}

fn check_horizon(horizon: f64) -> Result<(), IntegrationError> {
    if horizon.is_finite() && horizon > 0.0 {
        Ok(())
    } else {
        Err(IntegrationError::InvalidHorizon(horizon))
    }
}

/// Integrates the scalar autonomous equation `v' = rate(v)` for `v = log x`.
pub fn solve_autonomous(
    rate: &dyn Fn(f64) -> f64,
    x0: f64,
    horizon: f64,
    sc: &StepControl,
) -> Result<Trajectory, IntegrationError> {
    if !(x0.is_finite() && x0 > 0.0) {
        return Err(IntegrationError::InvalidInitialValue(x0));
    }
    check_horizon(horizon)?;
    sc.validate(None)?;
    let v0 = x0.ln();
    let stepper = Stepper {
        rhs: Rhs::Autonomous(rate),
        traj: Trajectory::new(None, 0.0, v0, rate(v0)),
        used_in_step: Cell::new(false),
    };
    stepper.run(horizon, sc)
}

/// `y' = mass * f(y)`, `y(0) = y0`.
pub fn solve_ode(
    f: &Nonlinearity,
    mass: f64,
    y0: f64,
    horizon: f64,
    sc: &StepControl,
) -> Result<Trajectory, IntegrationError> {
    let rate = |v: f64| mass * (f.log_value(v) - v).exp();
    solve_autonomous(&rate, y0, horizon, sc)
}

/// `x' = f(x) - eps(x)`, `x(0) = x0`.
pub fn solve_perturbed_ode(
    f: &Nonlinearity,
    eps: &Perturbation,
    x0: f64,
    horizon: f64,
    sc: &StepControl,
) -> Result<Trajectory, IntegrationError> {
    let rate = |v: f64| (f.log_value(v) - v).exp() * (1.0 - eps.relative_at_log(f, v));
    solve_autonomous(&rate, x0, horizon, sc)
}

/// `x'(t) = integral of f(x(t + s)) mu(ds)` for `t > 0`, `x = psi` on `[-tau, 0]`.
pub fn solve_fde(
    f: &Nonlinearity,
    measure: &DelayMeasure,
    psi: &HistoryFunction,
    horizon: f64,
    sc: &StepControl,
) -> Result<Trajectory, IntegrationError> {
    check_horizon(horizon)?;
    let tau = measure.tau();
    sc.validate(Some(tau))?;
    psi.validate(tau)?;
    let v0 = psi.log_value(0.0);
    let mut stepper = Stepper {
        rhs: Rhs::Delay { f, measure },
        traj: Trajectory::new(Some(*psi), -tau, v0, 0.0),
        used_in_step: Cell::new(false),
    };
    let d0 = stepper.rate(0.0, v0, &InStep::Linear { t0: 0.0, v0, d0: 0.0 })?;
    stepper.traj.log_rates[0] = d0;
    stepper.run(horizon, sc)
}
