//! CSV output with a fixed numeric format: 17 significant digits in
//! scientific notation, comma separated, LF line endings.

use std::io::{self, Write};

use crate::integrator::Trajectory;
use crate::limits::DiagnosticSeries;
use crate::logspace::exp_if_representable;

/// Formats `v` with 17 significant digits.
pub fn format_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".to_owned()
    } else if v > 0.0 {
        "inf".to_owned()
    } else {
        "-inf".to_owned()
    }
}

/// Columns `t,log_x,dlog_x,x` at the mesh points; `x` is left empty when
/// `exp(log_x)` overflows.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut w: W) -> io::Result<()> {
    w.write_all(b"t,log_x,dlog_x,x\n")?;
    for ((&t, &v), &d) in traj.mesh().iter().zip(traj.mesh_log_values()).zip(traj.mesh_log_rates()) {
        let x = exp_if_representable(v).map(format_number).unwrap_or_default();
        writeln!(w, "{},{},{},{}", format_number(t), format_number(v), format_number(d), x)?;
    }
    w.flush()
}

/// Columns `t,value,ell`.
pub fn write_series_csv<W: Write>(series: &DiagnosticSeries, mut w: W) -> io::Result<()> {
    w.write_all(b"t,value,ell\n")?;
    for s in series.samples() {
        writeln!(w, "{},{},{}", format_number(s.t), format_number(s.value), format_number(s.ell))?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{solve_ode, StepControl};
    use crate::nonlinearity::Nonlinearity;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(format_number(0.1), "1.0000000000000001e-1");
        assert_eq!(format_number(-2.0), "-2.0000000000000000e0");
        assert_eq!(format_number(f64::INFINITY), "inf");
        let back: f64 = format_number(std::f64::consts::PI).parse().unwrap();
        assert_eq!(back, std::f64::consts::PI);
    }

    #[test]
    fn trajectory_rows() {
        let f = Nonlinearity::linear(1.0).unwrap();
        let y = solve_ode(&f, 1.0, 1.0, 1.0, &StepControl::fixed(0.5)).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&y, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.split('\n').collect();
        assert_eq!(lines[0], "t,log_x,dlog_x,x");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[4], "");
        assert!(lines[1].starts_with("0.0000000000000000e0,0.0000000000000000e0,1.0000000000000000e0,1.0"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn series_rows() {
        let s = DiagnosticSeries::from_times("s", &[1.0, 2.0], &[3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        write_series_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(2).unwrap(), "2.0000000000000000e0,4.0000000000000000e0,6.9314718055994529e-1");
    }
}
