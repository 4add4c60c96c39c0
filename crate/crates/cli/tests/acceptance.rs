//! Acceptance suite: one PASS/FAIL line per criterion.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fde_core::asymptotics::{GrowthSettings, HwSettings, Outcome};
use fde_core::limits::geometric_grid;
use fde_core::{
    estimate_lambda, hw_experiment, solve_fde, solve_ode, verify_growth_limit, Atom, DelayMeasure, DensityPiece,
    DensityShape, HistoryFunction, LambdaClass, LogGrid, Nonlinearity, Perturbation, RateTransform, StepControl,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

struct Check {
    pass: bool,
    detail: String,
}

fn damped(alpha: f64) -> Nonlinearity {
    Nonlinearity::log_damped(alpha).unwrap()
}

fn two_atoms() -> DelayMeasure {
    DelayMeasure::atomic(1.0, &[(0.0, 1.0), (-1.0, 1.0)]).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn ode_f_identity() -> Check {
    let f = damped(1.0);
    let rt = RateTransform::new(f);
    let y = solve_ode(&f, 2.0, 1.0, 100.0, &StepControl::fixed(1.0 / 64.0)).unwrap();
    let worst = geometric_grid(0.1, 100.0, 50)
        .into_iter()
        .map(|t| (y.log_value(t).unwrap() - rt.invert_f(2.0 * t).unwrap()).abs())
        .fold(0.0, f64::max);
    Check {
        pass: worst <= 1e-6,
        detail: format!("max |log y - log F^-1(F(y0) + Mt)| = {worst:.2e} (<= 1e-6)"),
    }
}

fn zero_delay() -> Check {
    let f = damped(1.0);
    let sc = StepControl::default();
    let x = solve_fde(&f, &DelayMeasure::dirac_at_zero(1.0).unwrap(), &HistoryFunction::default(), 50.0, &sc).unwrap();
    let y = solve_ode(&f, 1.0, 1.0, 50.0, &sc).unwrap();
    let worst = (0..=500)
        .map(|k| {
            let t = 0.1 * k as f64;
            let (a, b) = (x.log_value(t).unwrap(), y.log_value(t).unwrap());
            (a - b).abs() / b.abs().max(1.0)
        })
        .fold(0.0, f64::max);
    Check {
        pass: worst <= 1e-8,
        detail: format!("max relative gap in log x on [0, 50] = {worst:.2e} (<= 1e-8)"),
    }
}

fn growth_limit(m: DelayMeasure, predicted: f64) -> Check {
    let run = verify_growth_limit(&damped(1.0), &m, &HistoryFunction::default(), &GrowthSettings::default()).unwrap();
    let est = run.ratio_limit.estimate;
    let raw = run.ratio.last().unwrap().value;
    Check {
        pass: run.verdict.outcome == Outcome::Pass && rel(est, predicted) <= 0.10,
        detail: format!(
            "log-fit limit {est:.5} +/- {:.1e} vs {predicted:.5} (deviation {:.2}% <= 10%; raw x/F^-1(Mt) at t=1e3 is {raw:.5})",
            run.ratio_limit.uncertainty,
            100.0 * rel(est, predicted)
        ),
    }
}

fn lambda_regimes() -> Check {
    let grid = LogGrid::default();
    let classes: Vec<LambdaClass> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&a| estimate_lambda(&damped(a), &grid).unwrap().class)
        .collect();
    let ok = classes[0] == LambdaClass::Infinite
        && matches!(classes[1], LambdaClass::Finite { value, .. } if (value - 1.0).abs() <= 0.05)
        && classes[2] == LambdaClass::Zero;
    Check {
        pass: ok,
        detail: format!(
            "alpha 0.5 -> {}, alpha 1 -> {}, alpha 2 -> {} (u up to 1e4)",
            classes[0], classes[1], classes[2]
        ),
    }
}

fn extreme_regimes() -> Check {
    let psi = HistoryFunction::default();
    let zero = verify_growth_limit(&damped(2.0), &two_atoms(), &psi, &GrowthSettings::default()).unwrap();
    let inf = verify_growth_limit(&damped(0.5), &two_atoms(), &psi, &GrowthSettings::default()).unwrap();
    let z = zero.ratio_limit.estimate;
    let tail = inf.ratio.len() / 2;
    let decreasing = inf.ratio.tail_decreasing(inf.ratio.len() - tail);
    let last = inf.ratio.last().unwrap().value;
    Check {
        pass: zero.lambda == LambdaClass::Zero
            && rel(z, 1.0) <= 0.10
            && inf.lambda == LambdaClass::Infinite
            && decreasing
            && last < 0.1,
        detail: format!(
            "alpha=2: limit {z:.5} vs 1 ({:.2}% <= 10%); alpha=0.5: tail decreasing = {decreasing}, last ratio {last:.2e} < 0.1",
            100.0 * rel(z, 1.0)
        ),
    }
}

fn f_over_t() -> Check {
    let run = verify_growth_limit(&damped(1.0), &two_atoms(), &HistoryFunction::default(), &GrowthSettings::default()).unwrap();
    let est = run.f_over_t_limit.estimate;
    let raw = run.f_over_t.last().unwrap().value;
    Check {
        pass: rel(est, 2.0) <= 0.02,
        detail: format!(
            "limit from series up to t=1e3: {est:.5} vs M = 2 ({:.2}% <= 2%); raw F(x(1e3))/1e3 = {raw:.5} ({:.2}%)",
            100.0 * rel(est, 2.0),
            100.0 * rel(raw, 2.0)
        ),
    }
}

fn delta_normalisation() -> Check {
    let run = verify_growth_limit(&damped(1.0), &two_atoms(), &HistoryFunction::default(), &GrowthSettings::default()).unwrap();
    let raw = run.delta.series().unwrap().last().unwrap().value;
    let est = run.delta_limit.unwrap().estimate;
    Check {
        pass: rel(raw, 1.0) <= 0.15 && rel(est, 1.0) <= 0.15,
        detail: format!("delta/(MC f f') at t=1e3 = {raw:.5}, limit {est:.5} (within 15% of 1)"),
    }
}

fn hartman_wintner() -> Check {
    let f = damped(1.0);
    let settings = HwSettings::default();
    let main = hw_experiment(&f, &Perturbation::ScaledFfPrime { c: 0.5 }, 1.0, 1.0, &settings).unwrap();
    let control = hw_experiment(&f, &Perturbation::Proportional { kappa: 1e-30 }, 1.0, 1.0, &settings).unwrap();
    let mu = main.mu.limit.estimate;
    let ratio = main.ratio_limit.estimate;
    let predicted = (-0.5f64).exp();
    let control_gap = control.ratio.values().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    Check {
        pass: rel(mu, 0.5) <= 0.05 && rel(ratio, predicted) <= 0.10 && control_gap <= 1e-6 && control.mu.limit.estimate == 0.0,
        detail: format!(
            "hw-mu {mu:.5} vs 0.5 ({:.2}% <= 5%); ratio limit {ratio:.5} vs {predicted:.5} ({:.2}% <= 10%); control |x/y - 1| <= {control_gap:.1e}",
            100.0 * rel(mu, 0.5),
            100.0 * rel(ratio, predicted)
        ),
    }
}

fn f_asymptotics() -> Check {
    let mut parts = Vec::new();
    let mut pass = true;
    for alpha in [1.0, 2.0] {
        let rt = RateTransform::new(damped(alpha));
        let ratio = |u: f64| rt.compute_f(u).unwrap() * (1.0 + alpha) / u.powf(1.0 + alpha);
        let (r3, r4) = (ratio(1e3), ratio(1e4));
        pass &= (r3 - 1.0).abs() <= 0.10 && (r4 - 1.0).abs() < (r3 - 1.0).abs();
        parts.push(format!("alpha={alpha}: u=1e3 -> {r3:.6}, u=1e4 -> {r4:.6}"));
    }
    Check {
        pass,
        detail: parts.join("; "),
    }
}

fn measure_strategy() -> impl Strategy<Value = DelayMeasure> {
    (
        0.5f64..3.0,
        prop::collection::vec((0.0f64..1.0, 0.1f64..2.0), 1..4),
        0.1f64..2.0,
    )
        .prop_map(|(tau, atoms, density)| {
            let atoms = atoms.into_iter().map(|(p, w)| Atom::new(-p * tau, w)).collect();
            let piece = DensityPiece::new(-tau, -0.5 * tau, DensityShape::Linear { intercept: density, slope: 0.0 });
            DelayMeasure::new(tau, atoms, vec![piece]).unwrap()
        })
}

fn property_suites() -> Check {
    let mut runner = TestRunner::new(Config::with_cases(64));
    let measures = runner.run(&(measure_strategy(), -2.0f64..2.0, -2.0f64..2.0), |(m, a, b)| {
        let g1 = |s: f64| s.sin();
        let g2 = |s: f64| (s * s).exp();
        let lhs = m.integrate_against(|s| a * g1(s) + b * g2(s)).unwrap();
        let rhs = a * m.integrate_against(g1).unwrap() + b * m.integrate_against(g2).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        prop_assert!(m.integrate_against(|s| s * s).unwrap() >= 0.0);
        prop_assert!((m.total_mass() - m.integrate_against(|_| 1.0).unwrap()).abs() <= 1e-12 * m.total_mass());
        prop_assert!((m.delay_moment() - m.integrate_against(f64::abs).unwrap()).abs() <= 1e-12 * m.delay_moment());
        Ok(())
    });

    let rt = RateTransform::new(damped(1.0));
    let roundtrip = runner.run(&(0.0f64..1e5), |t| {
        let back = rt.compute_f(rt.invert_f(t).unwrap()).unwrap();
        prop_assert!((back - t).abs() <= 1e-9 * t.max(1.0));
        Ok(())
    });

    let f = damped(1.0);
    let psi = HistoryFunction::Exponential { value: 1.0, rate: 0.5 };
    let v = |h: f64| solve_fde(&f, &two_atoms(), &psi, 20.0, &StepControl::fixed(h)).unwrap().log_value(20.0).unwrap();
    let (v1, v2, v4) = (v(0.25), v(0.125), v(0.0625));
    let order = ((v1 - v2) / (v2 - v4)).abs().log2();

    let deterministic = cli_determinism();

    Check {
        pass: measures.is_ok() && roundtrip.is_ok() && order >= 3.5 && deterministic.is_ok(),
        detail: format!(
            "measure linearity/positivity/consistency: {}; F roundtrip: {}; observed order {order:.2} (>= 3.5); CLI determinism: {}",
            status(&measures),
            status(&roundtrip),
            deterministic.err().unwrap_or_else(|| "ok".to_owned())
        ),
    }
}

fn status<E: std::fmt::Display>(r: &Result<(), E>) -> String {
    match r {
        Ok(()) => "ok".to_owned(),
        Err(e) => format!("FAILED ({e})"),
    }
}

fn cli_determinism() -> Result<(), String> {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/growth-alpha1.toml");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let status = Command::new(env!("CARGO_BIN_EXE_fdegrowth"))
            .args(["run", "--config"])
            .arg(&cfg)
            .args(["--override", "horizon=100", "--out"])
            .arg(d.path())
            .output()
            .map_err(|e| e.to_string())?
            .status;
        if !status.success() {
            return Err(format!("cli exited with {status}"));
        }
    }
    for name in ["trajectory.csv", "ratio.csv", "f-over-t.csv", "delta-normalised.csv"] {
        let a = std::fs::read(dirs[0].path().join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].path().join(name)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{name} differs between runs"));
        }
    }
    Ok(())
}

fn main() {
    let criteria: [(u8, &str, Duration, fn() -> Check); 11] = [
        (1, "ODE matches F^-1 identity", Duration::from_secs(1), ode_f_identity),
        (2, "zero-delay measure reduces to the ODE", Duration::from_secs(1), zero_delay),
        (3, "growth limit, lambda = 1, C = 1", Duration::from_secs(60), || growth_limit(two_atoms(), (-1f64).exp())),
        (
            4,
            "growth limit, lambda = 1, C = 2",
            Duration::from_secs(60),
            || growth_limit(DelayMeasure::atomic(2.0, &[(-2.0, 1.0)]).unwrap(), (-2f64).exp()),
        ),
        (5, "lambda classification", Duration::from_secs(5), lambda_regimes),
        (6, "lambda = 0 and lambda = infinity regimes", Duration::from_secs(120), extreme_regimes),
        (7, "F(x(t))/t -> M", Duration::from_secs(60), f_over_t),
        (8, "normalised delay defect", Duration::from_secs(60), delta_normalisation),
        (9, "perturbed ODE comparison", Duration::from_secs(30), hartman_wintner),
        (10, "F asymptotics", Duration::from_secs(5), f_asymptotics),
        (11, "property suites", Duration::from_secs(30), property_suites),
    ];
    let mut failures = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let c = check();
        let elapsed = start.elapsed();
        let pass = c.pass && elapsed <= budget;
        if !pass {
            failures += 1;
        }
        println!(
            "{} [{id:>2}] {name}: {} [{:.2}s, budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            c.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} of 11 criteria passed", 11 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
