//! Gauss–Legendre panels with adaptive bisection.
//!
//! Every integral in the crate (density parts of delay measures, the rate
//! transform, the Hartman–Wintner constant) goes through [`AdaptiveQuadrature`].

use std::f64::consts::PI;

use thiserror::Error;

/// Order used unless a caller asks for something else.
pub const DEFAULT_ORDER: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("adaptive quadrature did not converge on [{a}, {b}] (depth {depth})")]
pub struct QuadratureFailure {
    pub a: f64,
    pub b: f64,
    pub depth: usize,
}

/// Nodes and weights of an n-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be at least 1");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Tricomi's initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Single-panel estimate of the integral of `f` over [a, b].
    pub fn panel(&self, f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Points of [a, b] at which [`GaussLegendre::panel`] samples.
    pub fn mapped_nodes(&self, a: f64, b: f64) -> impl Iterator<Item = f64> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().map(move |&x| mid + half * x)
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre panels refined by bisection until a panel and its two halves
/// agree to the requested tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveQuadrature {
    rule: GaussLegendre,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_depth: usize,
}

impl Default for AdaptiveQuadrature {
    fn default() -> Self {
        Self::new(1e-10)
    }
}

impl AdaptiveQuadrature {
    pub fn new(rel_tol: f64) -> Self {
        Self {
            rule: GaussLegendre::new(DEFAULT_ORDER),
            rel_tol,
            abs_tol: 1e-300,
            max_depth: 48,
        }
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn rule(&self) -> &GaussLegendre {
        &self.rule
    }

    pub fn integrate(
        &self,
        mut f: impl FnMut(f64) -> f64,
        a: f64,
        b: f64,
    ) -> Result<f64, QuadratureFailure> {
        if a == b {
            return Ok(0.0);
        }
        if b < a {
            return self.integrate(f, b, a).map(|v| -v);
        }
        let whole = self.rule.panel(&mut f, a, b);
        if !whole.is_finite() {
            return Err(QuadratureFailure { a, b, depth: 0 });
        }
        // The first estimate sets the absolute scale; bisection refines it locally.
        let tol = self.abs_tol.max(self.rel_tol * whole.abs());
        self.refine(&mut f, a, b, whole, tol, 0)
    }

    fn refine(
        &self,
        f: &mut impl FnMut(f64) -> f64,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> Result<f64, QuadratureFailure> {
        let mid = 0.5 * (a + b);
        let left = self.rule.panel(f, a, mid);
        let right = self.rule.panel(f, mid, b);
        let sum = left + right;
        if !sum.is_finite() {
            return Err(QuadratureFailure { a, b, depth });
        }
        let local_tol = tol.max(self.rel_tol * sum.abs() * 1e-3);
        if (sum - whole).abs() <= local_tol || mid <= a || mid >= b {
            return Ok(sum);
        }
        if depth >= self.max_depth {
            return Err(QuadratureFailure { a, b, depth });
        }
        let child_tol = tol / std::f64::consts::SQRT_2;
        Ok(self.refine(f, a, mid, left, child_tol, depth + 1)?
            + self.refine(f, mid, b, right, child_tol, depth + 1)?)
    }
}
