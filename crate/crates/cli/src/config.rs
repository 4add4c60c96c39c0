//! TOML experiment configuration.
//!
//! ```toml
//! kind = "fde-growth"
//! horizon = 1000.0
//!
//! [nonlinearity]
//! family = "log-damped"
//! alpha = 1.0
//!
//! [measure]
//! tau = 1.0
//! atoms = [{ location = 0.0, weight = 1.0 }, { location = -1.0, weight = 1.0 }]
//! ```

use std::path::{Path, PathBuf};

use fde_core::asymptotics::{GrowthSettings, GrowthTolerances, HwSettings, SeriesGrid};
use fde_core::{
    Atom, DelayMeasure, DensityPiece, DensityShape, Family, HistoryFunction, LambdaClass, LogGrid, MeasureError,
    Model, Nonlinearity, Perturbation, StepControl,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("override `{0}` must look like key.path=value")]
    Override(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, message: impl ToString) -> Self {
        Self::Invalid {
            field: field.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FdeGrowth,
    HwCompare,
    FDiagnostics,
    Sweep,
}

impl ExperimentKind {
    pub fn verifies_theorem(self) -> bool {
        matches!(self, Self::FdeGrowth | Self::HwCompare | Self::Sweep)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensitySpec {
    Constant { a: f64, b: f64, value: f64 },
    Linear { a: f64, b: f64, intercept: f64, slope: f64 },
    Exponential { a: f64, b: f64, scale: f64, rate: f64 },
}

impl DensitySpec {
    fn build(&self) -> DensityPiece {
        match *self {
            Self::Constant { a, b, value } => DensityPiece::new(a, b, DensityShape::Constant { value }),
            Self::Linear { a, b, intercept, slope } => DensityPiece::new(a, b, DensityShape::Linear { intercept, slope }),
            Self::Exponential { a, b, scale, rate } => DensityPiece::new(a, b, DensityShape::Exponential { scale, rate }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub tau: f64,
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub densities: Vec<DensitySpec>,
}

impl Default for MeasureSpec {
    fn default() -> Self {
        Self {
            tau: 1.0,
            atoms: vec![Atom::new(0.0, 1.0), Atom::new(-1.0, 1.0)],
            densities: Vec::new(),
        }
    }
}

impl MeasureSpec {
    pub fn build(&self, field: &str) -> Result<DelayMeasure, ConfigError> {
        let pieces = self.densities.iter().map(DensitySpec::build).collect();
        DelayMeasure::new(self.tau, self.atoms.clone(), pieces).map_err(|e| {
            let sub = match &e {
                MeasureError::InvalidTau(_) => "tau".to_owned(),
                MeasureError::NonPositiveWeight { index, .. } | MeasureError::AtomOutOfRange { index, .. } => {
                    format!("atoms[{index}]")
                }
                MeasureError::PieceOutOfRange { index, .. }
                | MeasureError::NegativeDensity { index, .. }
                | MeasureError::Quadrature { index, .. } => format!("densities[{index}]"),
                MeasureError::OverlappingPieces { second, .. } => format!("densities[{second}]"),
                MeasureError::ZeroMass => "atoms".to_owned(),
            };
            ConfigError::invalid(format!("{field}.{sub}"), e)
        })
    }
}

/// Replacement for the estimated `lambda` class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum LambdaOverride {
    Zero,
    Infinite,
    Finite(f64),
}

impl From<LambdaOverride> for LambdaClass {
    fn from(o: LambdaOverride) -> Self {
        match o {
            LambdaOverride::Zero => LambdaClass::Zero,
            LambdaOverride::Infinite => LambdaClass::Infinite,
            LambdaOverride::Finite(value) => LambdaClass::Finite { value, uncertainty: 0.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaSpec {
    pub grid: LogGrid,
    #[serde(rename = "override", skip_serializing_if = "Option::is_none")]
    pub override_class: Option<LambdaOverride>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HwSpec {
    pub perturbation: Perturbation,
    #[serde(default = "one")]
    pub x0: f64,
    #[serde(default = "one")]
    pub y0: f64,
    #[serde(default = "default_hw_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_mu_u_max")]
    pub mu_u_max: f64,
}

fn one() -> f64 {
    1.0
}

fn default_hw_tolerance() -> f64 {
    0.10
}

fn default_mu_u_max() -> f64 {
    1e4
}

fn default_horizon() -> f64 {
    1e3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FDiagnosticsSpec {
    pub rv_sigma: f64,
    pub rv_tolerance: f64,
    /// `u_max` for the `F(e^u)` asymptotic ratio (log-damped family only).
    pub f_u_max: f64,
    pub f_tolerance: f64,
}

impl Default for FDiagnosticsSpec {
    fn default() -> Self {
        Self {
            rv_sigma: 2.0,
            rv_tolerance: 0.05,
            f_u_max: 1e4,
            f_tolerance: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Pipeline run for each parameter combination.
    pub base: ExperimentKind,
    /// Values of `alpha` for the log-damped family.
    pub alpha: Vec<f64>,
    /// Alternative delay measures; empty means the top-level measure.
    pub measures: Vec<MeasureSpec>,
    pub max_runs: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            base: ExperimentKind::FdeGrowth,
            alpha: Vec::new(),
            measures: Vec::new(),
            max_runs: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub nonlinearity: Family,
    #[serde(default)]
    pub measure: MeasureSpec,
    #[serde(default)]
    pub history: HistoryFunction,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub step: StepControl,
    #[serde(default)]
    pub grid: SeriesGrid,
    #[serde(default)]
    pub model: Model,
    #[serde(default)]
    pub tolerances: GrowthTolerances,
    #[serde(default)]
    pub lambda: LambdaSpec,
    /// Verdicts to report; empty means every check of the experiment kind.
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hw: Option<HwSpec>,
    #[serde(default)]
    pub f_diagnostics: FDiagnosticsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

pub const GROWTH_CHECKS: [&str; 3] = ["growth-limit", "f-over-t", "delay-defect"];
pub const HW_CHECKS: [&str; 1] = ["perturbed-ode-ratio"];
pub const F_CHECKS: [&str; 3] = ["lambda-class", "rv-index", "f-asymptotics"];

/// Validated objects built from an [`ExperimentConfig`].
#[derive(Debug, Clone)]
pub struct Resolved {
    pub nonlinearity: Nonlinearity,
    pub measure: DelayMeasure,
    pub growth: GrowthSettings,
    pub hw: Option<(Perturbation, f64, f64, HwSettings)>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            origin: origin.to_owned(),
            message: e.to_string(),
        })
    }

    /// Reads `path` and applies `key.path=value` overrides before deserialising.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let origin = path.display().to_string();
        if overrides.is_empty() {
            return Self::from_toml(&text, &origin);
        }
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
            origin: origin.clone(),
            message: e.to_string(),
        })?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let merged = toml::to_string(&table).map_err(|e| ConfigError::Parse {
            origin: origin.clone(),
            message: e.to_string(),
        })?;
        Self::from_toml(&merged, &format!("{origin} (with overrides)"))
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let nonlinearity = Nonlinearity::new(self.nonlinearity).map_err(|e| ConfigError::invalid("nonlinearity", e))?;
        let measure = self.measure.build("measure")?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(ConfigError::invalid("horizon", format!("must be positive and finite, got {}", self.horizon)));
        }
        if !(self.step.step.is_finite() && self.step.step > 0.0) {
            return Err(ConfigError::invalid("step.step", format!("must be positive, got {}", self.step.step)));
        }
        if matches!(self.step.mode, fde_core::StepMode::Fixed) && self.step.step > measure.tau() / 4.0 {
            return Err(ConfigError::invalid(
                "step.step",
                format!("fixed step {} exceeds tau/4 = {}", self.step.step, measure.tau() / 4.0),
            ));
        }
        self.history
            .validate(measure.tau())
            .map_err(|e| ConfigError::invalid("history", e))?;
        self.grid.times(self.horizon).map_err(|e| ConfigError::invalid("grid", e))?;
        self.lambda.grid.validate().map_err(|e| ConfigError::invalid("lambda.grid", e))?;
        let known: &[&str] = match self.kind {
            ExperimentKind::FdeGrowth | ExperimentKind::Sweep => &GROWTH_CHECKS,
            ExperimentKind::HwCompare => &HW_CHECKS,
            ExperimentKind::FDiagnostics => &F_CHECKS,
        };
        for (i, c) in self.checks.iter().enumerate() {
            if !known.contains(&c.as_str()) && !(self.kind == ExperimentKind::Sweep && HW_CHECKS.contains(&c.as_str())) {
                return Err(ConfigError::invalid(format!("checks[{i}]"), format!("unknown check `{c}`; expected one of {known:?}")));
            }
        }

        let growth = GrowthSettings {
            horizon: self.horizon,
            step: self.step,
            grid: self.grid,
            model: self.model,
            tolerances: self.tolerances,
            lambda_grid: self.lambda.grid,
            lambda_override: self.lambda.override_class.map(Into::into),
        };

        let needs_hw = self.kind == ExperimentKind::HwCompare
            || self.sweep.as_ref().is_some_and(|s| s.base == ExperimentKind::HwCompare);
        let hw = match (&self.hw, needs_hw) {
            (None, true) => return Err(ConfigError::invalid("hw", "hw-compare needs an [hw] section")),
            (None, false) => None,
            (Some(spec), _) => {
                for (name, v) in [("hw.x0", spec.x0), ("hw.y0", spec.y0)] {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(ConfigError::invalid(name, format!("must be positive, got {v}")));
                    }
                }
                spec.perturbation
                    .validate_against(&nonlinearity, spec.mu_u_max)
                    .map_err(|e| ConfigError::invalid("hw.perturbation", format!("hypothesis violation: {e}")))?;
                let settings = HwSettings {
                    horizon: self.horizon,
                    step: self.step,
                    grid: self.grid,
                    model: self.model,
                    tolerance: spec.tolerance,
                    mu_u_max: spec.mu_u_max,
                };
                Some((spec.perturbation, spec.x0, spec.y0, settings))
            }
        };

        if self.kind == ExperimentKind::Sweep && self.sweep.is_none() {
            return Err(ConfigError::invalid("sweep", "sweep experiments need a [sweep] section"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.base == ExperimentKind::Sweep {
                return Err(ConfigError::invalid("sweep.base", "a sweep cannot nest another sweep"));
            }
            if sweep.alpha.is_empty() && sweep.measures.is_empty() {
                return Err(ConfigError::invalid("sweep", "empty parameter range"));
            }
            for (i, a) in sweep.alpha.iter().enumerate() {
                Nonlinearity::log_damped(*a).map_err(|e| ConfigError::invalid(format!("sweep.alpha[{i}]"), e))?;
            }
            for (i, m) in sweep.measures.iter().enumerate() {
                m.build(&format!("sweep.measures[{i}]"))?;
            }
            let runs = sweep.alpha.len().max(1) * sweep.measures.len().max(1);
            if runs > sweep.max_runs {
                return Err(ConfigError::invalid(
                    "sweep.max_runs",
                    format!("{runs} runs requested, cap is {}", sweep.max_runs),
                ));
            }
        }

        Ok(Resolved {
            nonlinearity,
            measure,
            growth,
            hw,
        })
    }

    /// Checks to report, defaulting to all checks of the experiment kind.
    pub fn requested_checks(&self, kind: ExperimentKind) -> Vec<String> {
        let all: &[&str] = match kind {
            ExperimentKind::FdeGrowth | ExperimentKind::Sweep => &GROWTH_CHECKS,
            ExperimentKind::HwCompare => &HW_CHECKS,
            ExperimentKind::FDiagnostics => &F_CHECKS,
        };
        let requested: Vec<String> = self
            .checks
            .iter()
            .filter(|c| all.contains(&c.as_str()))
            .cloned()
            .collect();
        if requested.is_empty() {
            all.iter().map(|s| (*s).to_owned()).collect()
        } else {
            requested
        }
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.to_owned()))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(spec.to_owned()));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cursor = table;
    for p in parents {
        let entry = cursor
            .entry((*p).to_owned())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry.as_table_mut().ok_or_else(|| ConfigError::invalid(key.trim(), format!("`{p}` is not a table")))?;
    }
    cursor.insert((*last).to_owned(), value);
    Ok(())
}
