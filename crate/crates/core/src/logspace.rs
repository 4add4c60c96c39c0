//! Overflow-safe helpers for quantities carried as logarithms.

/// `log(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Max-shifted log-sum-exp of a slice. Empty input gives `-inf`.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|&t| (t - max).exp()).sum::<f64>().ln()
}

/// `log(c + e^u)` for `c >= 0`, accurate for large positive `u`.
#[inline]
pub fn log_offset_exp(c: f64, u: f64) -> f64 {
    if c == 0.0 {
        u
    } else if u > 0.0 {
        u + (c * (-u).exp()).ln_1p()
    } else {
        (c + u.exp()).ln()
    }
}

/// `exp(u)` if it is a finite double, otherwise `None`.
#[inline]
pub fn exp_if_representable(u: f64) -> Option<f64> {
    let x = u.exp();
    x.is_finite().then_some(x)
}
