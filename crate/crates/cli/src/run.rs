//! Pipelines behind `run`, `sweep` and `check-f`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fde_core::asymptotics::{hw_experiment, verify_growth_limit, AsymptoticsError, Outcome, TheoremVerdict};
use fde_core::export::{write_series_csv, write_trajectory_csv};
use fde_core::nonlinearity::check_rv_index_fprime;
use fde_core::{estimate_lambda, DiagnosticSeries, Family, LambdaClass, Nonlinearity, RateTransform, Trajectory};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind};
use crate::report::{combine_exit_codes, exit_code_for, RunReport, SweepRow, EXIT_CONFIG, EXIT_RUNTIME};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("integration failed: {0}")]
    Pipeline(#[from] AsymptoticsError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Pipeline(AsymptoticsError::Hypothesis(_)) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }
}

fn write_csv(
    report: &mut RunReport,
    dir: &Path,
    name: &str,
    write: impl FnOnce(BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), RunError> {
    let path = dir.join(format!("{name}.csv"));
    write(BufWriter::new(File::create(&path)?))?;
    report.files.insert(name.to_owned(), path);
    Ok(())
}

fn series_csv(report: &mut RunReport, dir: &Path, s: &DiagnosticSeries) -> Result<(), RunError> {
    write_csv(report, dir, s.name(), |w| write_series_csv(s, w))
}

fn trajectory_csv(report: &mut RunReport, dir: &Path, name: &str, t: &Trajectory) -> Result<(), RunError> {
    write_csv(report, dir, name, |w| write_trajectory_csv(t, w))
}

fn keep_requested(report: &mut RunReport, cfg: &ExperimentConfig, kind: ExperimentKind, verdicts: Vec<TheoremVerdict>) {
    let wanted = cfg.requested_checks(kind);
    report
        .verdicts
        .extend(verdicts.into_iter().filter(|v| wanted.contains(&v.check)));
}

fn warn_test_only(report: &mut RunReport, f: &Nonlinearity, kind: ExperimentKind) {
    if f.is_test_only() && kind.verifies_theorem() {
        let msg = format!("{} is a test-only family and violates the growth theorem hypotheses", f.descriptor());
        eprintln!("warning: {msg}");
        report.warnings.push(msg);
    }
}

fn run_growth(cfg: &ExperimentConfig, dir: &Path, report: &mut RunReport) -> Result<(), RunError> {
    let r = cfg.resolve()?;
    warn_test_only(report, &r.nonlinearity, ExperimentKind::FdeGrowth);
    let run = verify_growth_limit(&r.nonlinearity, &r.measure, &cfg.history, &r.growth)?;
    trajectory_csv(report, dir, "trajectory", &run.trajectory)?;
    series_csv(report, dir, &run.ratio)?;
    series_csv(report, dir, &run.f_over_t)?;
    if let Some(s) = run.delta.series() {
        series_csv(report, dir, s)?;
    }
    report.diagnostic("lambda", run.lambda);
    report.diagnostic("total-mass", r.measure.total_mass());
    report.diagnostic("delay-moment", r.measure.delay_moment());
    report.diagnostic("ratio-limit", run.ratio_limit);
    report.diagnostic("ratio-last", run.ratio.last().map(|s| s.value));
    report.diagnostic("f-over-t-limit", run.f_over_t_limit);
    report.diagnostic("f-over-t-last", run.f_over_t.last().map(|s| s.value));
    report.diagnostic("delta-limit", run.delta_limit);
    report.diagnostic("mesh-points", run.trajectory.mesh().len());
    let verdicts = run.verdicts().into_iter().cloned().collect();
    keep_requested(report, cfg, ExperimentKind::FdeGrowth, verdicts);
    Ok(())
}

fn run_hw(cfg: &ExperimentConfig, dir: &Path, report: &mut RunReport) -> Result<(), RunError> {
    let r = cfg.resolve()?;
    warn_test_only(report, &r.nonlinearity, ExperimentKind::HwCompare);
    let (eps, x0, y0, settings) = r.hw.expect("validated hw section");
    let run = hw_experiment(&r.nonlinearity, &eps, x0, y0, &settings)?;
    trajectory_csv(report, dir, "perturbed", &run.x)?;
    trajectory_csv(report, dir, "unperturbed", &run.y)?;
    series_csv(report, dir, &run.ratio)?;
    series_csv(report, dir, &run.mu.series)?;
    report.diagnostic("hw-mu", run.mu.limit);
    report.diagnostic("hw-mu-status", run.mu.status);
    report.diagnostic("ratio-limit", run.ratio_limit);
    keep_requested(report, cfg, ExperimentKind::HwCompare, vec![run.verdict]);
    Ok(())
}

fn lambda_verdict(class: LambdaClass) -> TheoremVerdict {
    let (predicted, outcome) = match class {
        LambdaClass::Zero => (0.0, Outcome::Pass),
        LambdaClass::Finite { value, .. } => (value, Outcome::Pass),
        LambdaClass::Infinite => (f64::INFINITY, Outcome::Pass),
        LambdaClass::BoundedF => (0.0, Outcome::Trivial),
        LambdaClass::Inconclusive => (f64::NAN, Outcome::Inconclusive),
    };
    let uncertainty = match class {
        LambdaClass::Finite { uncertainty, .. } => uncertainty,
        _ => f64::NAN,
    };
    TheoremVerdict {
        check: "lambda-class".to_owned(),
        regime: class.to_string(),
        predicted,
        estimated: predicted,
        uncertainty,
        deviation: 0.0,
        tolerance: f64::NAN,
        outcome,
        notes: vec!["classification only; there is no reference value".to_owned()],
    }
}

fn run_f_diagnostics(cfg: &ExperimentConfig, dir: &Path, report: &mut RunReport) -> Result<(), RunError> {
    let r = cfg.resolve()?;
    let f = r.nonlinearity;
    let spec = &cfg.f_diagnostics;
    let lambda = estimate_lambda(&f, &cfg.lambda.grid).map_err(AsymptoticsError::from)?;
    let lambda_series = DiagnosticSeries::new(
        "lambda-ratio",
        lambda
            .series
            .iter()
            .filter(|(_, v)| v.is_finite())
            .map(|&(u, v)| fde_core::limits::Sample { t: u, value: v, ell: u })
            .collect(),
    )
    .map_err(AsymptoticsError::from)?;
    series_csv(report, dir, &lambda_series)?;
    report.diagnostic("lambda", lambda.class);
    report.diagnostic("lambda-tail-slope", lambda.tail_slope);
    let mut verdicts = vec![lambda_verdict(lambda.class)];

    let rv = check_rv_index_fprime(&f, spec.rv_sigma, &cfg.lambda.grid, spec.rv_tolerance).map_err(AsymptoticsError::from)?;
    if !rv.series.is_empty() {
        series_csv(report, dir, &rv.series)?;
    }
    report.diagnostic("rv-limit", rv.limit);
    verdicts.push(match rv.consistent_with_rv0 {
        None => TheoremVerdict::inconclusive("rv-index", "f' slowly varying", 1.0, rv.limit.estimate, "ratio did not converge"),
        Some(_) => TheoremVerdict::relative("rv-index", "f' slowly varying", 1.0, rv.limit.estimate, rv.limit.uncertainty, spec.rv_tolerance),
    });

    if let Family::LogDamped { alpha } = f.family() {
        let rt = RateTransform::new(f);
        let (series, limit) = rt.check_f_asymptotics(alpha, spec.f_u_max).map_err(AsymptoticsError::from)?;
        series_csv(report, dir, &series)?;
        report.diagnostic("f-asymptotic-limit", limit);
        let last = series.last().map_or(f64::NAN, |s| s.value);
        verdicts.push(TheoremVerdict::relative(
            "f-asymptotics",
            &format!("alpha={alpha}"),
            1.0,
            last,
            limit.uncertainty,
            spec.f_tolerance,
        ));
    }
    keep_requested(report, cfg, ExperimentKind::FDiagnostics, verdicts);
    Ok(())
}

fn run_single(cfg: &ExperimentConfig, kind: ExperimentKind, dir: &Path, report: &mut RunReport) -> Result<(), RunError> {
    match kind {
        ExperimentKind::FdeGrowth => run_growth(cfg, dir, report),
        ExperimentKind::HwCompare => run_hw(cfg, dir, report),
        ExperimentKind::FDiagnostics => run_f_diagnostics(cfg, dir, report),
        ExperimentKind::Sweep => unreachable!("sweeps are dispatched separately"),
    }
}

/// Runs one experiment into `dir` and writes `report.json` there. Errors are
/// recorded in the report as well as returned through the exit code.
pub fn run(cfg: &ExperimentConfig, dir: &Path, jobs: usize) -> RunReport {
    let start = Instant::now();
    let mut report = RunReport::new(cfg.clone());
    let result = fs::create_dir_all(dir).map_err(RunError::from).and_then(|_| {
        if cfg.kind == ExperimentKind::Sweep {
            sweep(cfg, dir, jobs, &mut report)
        } else {
            run_single(cfg, cfg.kind, dir, &mut report)
        }
    });
    report.exit_code = match &result {
        Ok(()) if cfg.kind == ExperimentKind::Sweep => combine_exit_codes(report.sweep.iter().map(|r| r.exit_code)),
        Ok(()) => exit_code_for(&report.verdicts),
        Err(e) => {
            report.error = Some(e.to_string());
            e.exit_code()
        }
    };
    report.timings.insert("total-seconds".to_owned(), start.elapsed().as_secs_f64());
    if dir.is_dir() {
        if let Err(e) = report.write(dir) {
            eprintln!("error: cannot write report: {e}");
        }
    }
    report
}

fn sweep(cfg: &ExperimentConfig, dir: &Path, jobs: usize, report: &mut RunReport) -> Result<(), RunError> {
    cfg.resolve()?;
    let spec = cfg.sweep.as_ref().expect("validated sweep section");
    let alphas: Vec<Option<f64>> = if spec.alpha.is_empty() {
        vec![None]
    } else {
        spec.alpha.iter().copied().map(Some).collect()
    };
    let measures: Vec<Option<usize>> = if spec.measures.is_empty() {
        vec![None]
    } else {
        (0..spec.measures.len()).map(Some).collect()
    };
    let combos: Vec<(usize, Option<f64>, Option<usize>)> = alphas
        .iter()
        .flat_map(|&a| measures.iter().map(move |&m| (a, m)))
        .enumerate()
        .map(|(i, (a, m))| (i, a, m))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(std::io::Error::other)?;
    let rows: Vec<SweepRow> = pool.install(|| {
        combos
            .par_iter()
            .map(|&(i, alpha, measure)| {
                let mut sub = cfg.clone();
                sub.kind = spec.base;
                sub.sweep = None;
                sub.output = None;
                let mut name = format!("run-{i:03}");
                if let Some(a) = alpha {
                    sub.nonlinearity = Family::LogDamped { alpha: a };
                    name.push_str(&format!("-alpha-{a}"));
                }
                if let Some(m) = measure {
                    sub.measure = spec.measures[m].clone();
                    name.push_str(&format!("-measure-{m}"));
                }
                let sub_dir = dir.join(&name);
                let r = run(&sub, &sub_dir, 1);
                let main = r.verdicts.first();
                SweepRow {
                    run: i,
                    alpha,
                    measure,
                    directory: PathBuf::from(name),
                    regime: main.map_or_else(|| "error".to_owned(), |v| v.regime.clone()),
                    predicted: main.map_or(f64::NAN, |v| v.predicted),
                    estimated: main.map_or(f64::NAN, |v| v.estimated),
                    outcome: match (main, &r.error) {
                        (_, Some(e)) => format!("error: {e}"),
                        (Some(v), None) => v.outcome.to_string(),
                        (None, None) => "no verdict".to_owned(),
                    },
                    exit_code: r.exit_code,
                }
            })
            .collect()
    });

    let table = dir.join("sweep.csv");
    let mut text = String::from("run,alpha,measure,regime,predicted,estimated,outcome,exit_code\n");
    for row in &rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.run,
            row.alpha.map(fde_core::export::format_number).unwrap_or_default(),
            row.measure.map(|m| m.to_string()).unwrap_or_default(),
            row.regime,
            fde_core::export::format_number(row.predicted),
            fde_core::export::format_number(row.estimated),
            row.outcome.replace(',', ";"),
            row.exit_code
        ));
    }
    fs::write(&table, text)?;
    report.files.insert("sweep".to_owned(), table);
    report.sweep = rows;
    Ok(())
}
