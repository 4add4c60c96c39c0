//! Numerical toolkit for subexponential growth in functional differential
//! equations with distributed delay.
//!
//! The central object is the scalar equation
//! `x'(t) = integral over [-tau, 0] of f(x(t + s)) mu(ds)` with a finite
//! positive measure `mu` of mass `M` and delay moment `C`, compared against the
//! collapsed ODE `y' = M f(y)` through the rate transform
//! `F(x) = integral from 1 to x of du / f(u)`.

pub mod asymptotics;
pub mod export;
pub mod integrator;
pub mod limits;
pub mod logspace;
pub mod measure;
pub mod nonlinearity;
pub mod quadrature;
pub mod rate_transform;

use thiserror::Error;

pub use asymptotics::{
    compute_hw_mu, hw_experiment, verify_growth_limit, AsymptoticsError, HwExperiment, HwMu, Outcome,
    TheoremRun, TheoremVerdict,
};
pub use integrator::{
    solve_fde, solve_ode, solve_perturbed_ode, HistoryFunction, IntegrationError, StepControl, StepMode,
    Trajectory,
};
pub use limits::{extrapolate_limit, DiagnosticSeries, LimitEstimate, LimitStatus, Model, SeriesError};
pub use measure::{Atom, DelayMeasure, DensityPiece, DensityShape, MeasureError};
pub use nonlinearity::{
    estimate_lambda, Family, LambdaClass, LambdaEstimate, LogGrid, Nonlinearity, NonlinearityError, Perturbation,
};
pub use rate_transform::{RateError, RateTransform};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
