//! Finite positive Borel measures on `[-tau, 0]`.
//!
//! A [`DelayMeasure`] is a finite sum of point masses plus piecewise densities.
//! Atoms are summed exactly; densities go through adaptive Gauss–Legendre
//! quadrature, so a purely atomic measure never picks up quadrature error.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{AdaptiveQuadrature, QuadratureFailure};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("delay horizon tau must be positive and finite, got {0}")]
    InvalidTau(f64),
    #[error("atom {index}: weight {weight} must be positive and finite")]
    NonPositiveWeight { index: usize, weight: f64 },
    #[error("atom {index}: location {location} lies outside [-{tau}, 0]")]
    AtomOutOfRange { index: usize, location: f64, tau: f64 },
    #[error("density piece {index}: interval [{a}, {b}] is empty or outside [-{tau}, 0]")]
    PieceOutOfRange { index: usize, a: f64, b: f64, tau: f64 },
    #[error("density pieces {first} and {second} overlap")]
    OverlappingPieces { first: usize, second: usize },
    #[error("density piece {index}: density is negative or non-finite at s = {at}")]
    NegativeDensity { index: usize, at: f64 },
    #[error("measure has zero total mass")]
    ZeroMass,
    #[error("density piece {index} on [{a}, {b}]: {source}")]
    Quadrature {
        index: usize,
        a: f64,
        b: f64,
        #[source]
        source: QuadratureFailure,
    },
}

/// Point mass `weight * delta_{location}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

impl Atom {
    pub fn new(location: f64, weight: f64) -> Self {
        Self { location, weight }
    }
}

/// Shape of a density on one piece, evaluated at `s in [a, b]`.
#[derive(Clone)]
pub enum DensityShape {
    /// `value`
    Constant { value: f64 },
    /// `intercept + slope * s`
    Linear { intercept: f64, slope: f64 },
    /// `scale * exp(rate * s)`
    Exponential { scale: f64, rate: f64 },
    /// Arbitrary nonnegative function supplied from code.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl DensityShape {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Linear { intercept, slope } => intercept + slope * s,
            Self::Exponential { scale, rate } => scale * (rate * s).exp(),
            Self::Custom(g) => g(s),
        }
    }
}

impl fmt::Debug for DensityShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant { value } => write!(f, "Constant({value})"),
            Self::Linear { intercept, slope } => write!(f, "Linear({intercept} + {slope}*s)"),
            Self::Exponential { scale, rate } => write!(f, "Exponential({scale}*exp({rate}*s))"),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DensityPiece {
    pub a: f64,
    pub b: f64,
    pub shape: DensityShape,
}

impl DensityPiece {
    pub fn new(a: f64, b: f64, shape: DensityShape) -> Self {
        Self { a, b, shape }
    }

    pub fn constant(a: f64, b: f64, value: f64) -> Self {
        Self::new(a, b, DensityShape::Constant { value })
    }
}

/// Finite positive measure on `[-tau, 0]`. Immutable once built.
#[derive(Debug, Clone)]
pub struct DelayMeasure {
    tau: f64,
    atoms: Vec<Atom>,
    pieces: Vec<DensityPiece>,
    quadrature: AdaptiveQuadrature,
    mass: f64,
    moment: f64,
}

const DENSITY_SAMPLES: usize = 65;

impl DelayMeasure {
    pub fn new(
        tau: f64,
        atoms: Vec<Atom>,
        pieces: Vec<DensityPiece>,
    ) -> Result<Self, MeasureError> {
        Self::with_quadrature(tau, atoms, pieces, AdaptiveQuadrature::default())
    }

    pub fn with_quadrature(
        tau: f64,
        atoms: Vec<Atom>,
        mut pieces: Vec<DensityPiece>,
        quadrature: AdaptiveQuadrature,
    ) -> Result<Self, MeasureError> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(MeasureError::InvalidTau(tau));
        }
        for (index, atom) in atoms.iter().enumerate() {
            if !(atom.weight.is_finite() && atom.weight > 0.0) {
                return Err(MeasureError::NonPositiveWeight {
                    index,
                    weight: atom.weight,
                });
            }
            if !(atom.location >= -tau && atom.location <= 0.0) {
                return Err(MeasureError::AtomOutOfRange {
                    index,
                    location: atom.location,
                    tau,
                });
            }
        }
        for (index, p) in pieces.iter().enumerate() {
            if !(p.a >= -tau && p.b <= 0.0 && p.a < p.b) {
                return Err(MeasureError::PieceOutOfRange {
                    index,
                    a: p.a,
                    b: p.b,
                    tau,
                });
            }
            for k in 0..DENSITY_SAMPLES {
                let s = p.a + (p.b - p.a) * k as f64 / (DENSITY_SAMPLES - 1) as f64;
                let rho = p.shape.eval(s);
                if !(rho.is_finite() && rho >= 0.0) {
                    return Err(MeasureError::NegativeDensity { index, at: s });
                }
            }
        }
        let mut order: Vec<usize> = (0..pieces.len()).collect();
        order.sort_by(|&i, &j| pieces[i].a.total_cmp(&pieces[j].a));
        for w in order.windows(2) {
            if pieces[w[0]].b > pieces[w[1]].a {
                return Err(MeasureError::OverlappingPieces {
                    first: w[0].min(w[1]),
                    second: w[0].max(w[1]),
                });
            }
        }
        pieces = order.into_iter().map(|i| pieces[i].clone()).collect();

        let mut measure = Self {
            tau,
            atoms,
            pieces,
            quadrature,
            mass: 0.0,
            moment: 0.0,
        };
        measure.mass = measure.integrate_against(|_| 1.0)?;
        measure.moment = measure.integrate_against(f64::abs)?;
        if !(measure.mass > 0.0) {
            return Err(MeasureError::ZeroMass);
        }
        Ok(measure)
    }

    /// Purely atomic measure.
    pub fn atomic(tau: f64, atoms: &[(f64, f64)]) -> Result<Self, MeasureError> {
        Self::new(
            tau,
            atoms.iter().map(|&(s, w)| Atom::new(s, w)).collect(),
            Vec::new(),
        )
    }

    /// Unit point mass at 0 (the zero-delay case).
    pub fn dirac_at_zero(tau: f64) -> Result<Self, MeasureError> {
        Self::atomic(tau, &[(0.0, 1.0)])
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn pieces(&self) -> &[DensityPiece] {
        &self.pieces
    }

    /// `M`, the total mass.
    pub fn total_mass(&self) -> f64 {
        self.mass
    }

    /// `C = integral of |s| mu(ds)`.
    pub fn delay_moment(&self) -> f64 {
        self.moment
    }

    pub fn is_atomic(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Smallest `|s|` carrying mass other than an atom at exactly 0.
    /// Used by the integrator to decide whether a step looks into itself.
    pub fn nearest_nonzero_lag(&self) -> f64 {
        let atom_lag = self
            .atoms
            .iter()
            .filter(|a| a.location != 0.0)
            .map(|a| -a.location)
            .fold(f64::INFINITY, f64::min);
        let piece_lag = self
            .pieces
            .iter()
            .map(|p| -p.b)
            .fold(f64::INFINITY, f64::min);
        atom_lag.min(piece_lag)
    }

    /// `integral of g dmu`.
    pub fn integrate_against(&self, mut g: impl FnMut(f64) -> f64) -> Result<f64, MeasureError> {
        let mut total: f64 = self.atoms.iter().map(|a| a.weight * g(a.location)).sum();
        for (index, p) in self.pieces.iter().enumerate() {
            total += self
                .quadrature
                .integrate(|s| g(s) * p.shape.eval(s), p.a, p.b)
                .map_err(|source| MeasureError::Quadrature {
                    index,
                    a: p.a,
                    b: p.b,
                    source,
                })?;
        }
        Ok(total)
    }

    /// `log integral of exp(h(s)) mu(ds)`, shifted by the largest sampled exponent
    /// so that no intermediate overflows.
    pub fn log_integrate_exp(&self, mut h: impl FnMut(f64) -> f64) -> Result<f64, MeasureError> {
        if self.pieces.is_empty() {
            // Atomic fast path: two passes over at most a handful of atoms.
            let mut shift = f64::NEG_INFINITY;
            let mut buf = [0.0f64; 8];
            if self.atoms.len() <= buf.len() {
                for (slot, a) in buf.iter_mut().zip(&self.atoms) {
                    *slot = a.weight.ln() + h(a.location);
                    shift = shift.max(*slot);
                }
                let sum: f64 = buf[..self.atoms.len()]
                    .iter()
                    .map(|&t| (t - shift).exp())
                    .sum();
                return Ok(shift + sum.ln());
            }
        }

        let atom_terms: Vec<f64> = self
            .atoms
            .iter()
            .map(|a| a.weight.ln() + h(a.location))
            .collect();
        let mut shift = atom_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for p in &self.pieces {
            for s in self.quadrature.rule().mapped_nodes(p.a, p.b) {
                shift = shift.max(h(s));
            }
            shift = shift.max(h(p.a)).max(h(p.b));
        }
        let mut sum: f64 = atom_terms.iter().map(|&t| (t - shift).exp()).sum();
        for (index, p) in self.pieces.iter().enumerate() {
            sum += self
                .quadrature
                .integrate(|s| (h(s) - shift).exp() * p.shape.eval(s), p.a, p.b)
                .map_err(|source| MeasureError::Quadrature {
                    index,
                    a: p.a,
                    b: p.b,
                    source,
                })?;
        }
        Ok(shift + sum.ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn total_mass_examples() {
        assert_eq!(DelayMeasure::dirac_at_zero(1.0).unwrap().total_mass(), 1.0);
        let m = DelayMeasure::atomic(1.0, &[(0.0, 1.0), (-1.0, 0.5)]).unwrap();
        assert_eq!(m.total_mass(), 1.5);
        let d = DelayMeasure::new(1.0, vec![], vec![DensityPiece::constant(-1.0, 0.0, 2.0)]).unwrap();
        assert_relative_eq!(d.total_mass(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn delay_moment_examples() {
        assert_eq!(DelayMeasure::dirac_at_zero(1.0).unwrap().delay_moment(), 0.0);
        assert_eq!(DelayMeasure::atomic(2.0, &[(-2.0, 1.0)]).unwrap().delay_moment(), 2.0);
        let d = DelayMeasure::new(1.0, vec![], vec![DensityPiece::constant(-1.0, 0.0, 1.0)]).unwrap();
        assert_relative_eq!(d.delay_moment(), 0.5, max_relative = 1e-14);
    }

    #[test]
    fn integrate_against_examples() {
        let m = DelayMeasure::atomic(1.0, &[(0.0, 1.0), (-1.0, 1.0)]).unwrap();
        assert_relative_eq!(
            m.integrate_against(f64::exp).unwrap(),
            1.0 + (-1.0f64).exp(),
            max_relative = 1e-15
        );
        let d = DelayMeasure::new(1.0, vec![], vec![DensityPiece::constant(-1.0, 0.0, 1.0)]).unwrap();
        assert_relative_eq!(d.integrate_against(|s| s * s).unwrap(), 1.0 / 3.0, max_relative = 1e-13);
    }

    #[test]
    fn atom_on_piece_endpoint_adds() {
        let m = DelayMeasure::new(
            1.0,
            vec![Atom::new(-1.0, 0.25)],
            vec![DensityPiece::constant(-1.0, 0.0, 1.0)],
        )
        .unwrap();
        assert_relative_eq!(m.total_mass(), 1.25, max_relative = 1e-14);
        assert_relative_eq!(m.delay_moment(), 0.75, max_relative = 1e-14);
    }

    #[test]
    fn rejects_negative_weight_and_names_atom() {
        let err = DelayMeasure::atomic(1.0, &[(0.0, 1.0), (-0.5, -0.5)]).unwrap_err();
        assert_eq!(err, MeasureError::NonPositiveWeight { index: 1, weight: -0.5 });
        assert!(err.to_string().contains("atom 1"));
    }

    #[test]
    fn rejects_out_of_range_and_overlap() {
        assert!(matches!(
            DelayMeasure::atomic(1.0, &[(-1.5, 1.0)]),
            Err(MeasureError::AtomOutOfRange { index: 0, .. })
        ));
        assert!(matches!(
            DelayMeasure::atomic(1.0, &[(0.5, 1.0)]),
            Err(MeasureError::AtomOutOfRange { .. })
        ));
        assert!(matches!(
            DelayMeasure::new(
                1.0,
                vec![],
                vec![
                    DensityPiece::constant(-1.0, -0.4, 1.0),
                    DensityPiece::constant(-0.5, 0.0, 1.0)
                ]
            ),
            Err(MeasureError::OverlappingPieces { .. })
        ));
        assert!(matches!(
            DelayMeasure::new(
                1.0,
                vec![],
                vec![DensityPiece::new(
                    -1.0,
                    0.0,
                    DensityShape::Linear { intercept: -0.5, slope: 1.0 }
                )]
            ),
            Err(MeasureError::NegativeDensity { index: 0, .. })
        ));
        assert!(matches!(DelayMeasure::new(1.0, vec![], vec![]), Err(MeasureError::ZeroMass)));
        assert!(matches!(DelayMeasure::atomic(0.0, &[(0.0, 1.0)]), Err(MeasureError::InvalidTau(_))));
    }

    #[test]
    fn adjacent_pieces_are_allowed() {
        let m = DelayMeasure::new(
            1.0,
            vec![],
            vec![
                DensityPiece::constant(-0.5, 0.0, 1.0),
                DensityPiece::new(-1.0, -0.5, DensityShape::Exponential { scale: 1.0, rate: 1.0 }),
            ],
        )
        .unwrap();
        let exact = 0.5 + ((-0.5f64).exp() - (-1.0f64).exp());
        assert_relative_eq!(m.total_mass(), exact, max_relative = 1e-13);
    }

    #[test]
    fn log_integrate_exp_matches_direct_and_survives_overflow() {
        let m = DelayMeasure::new(
            1.0,
            vec![Atom::new(0.0, 1.0), Atom::new(-1.0, 0.5)],
            vec![DensityPiece::constant(-1.0, -0.25, 2.0)],
        )
        .unwrap();
        let direct = m.integrate_against(|s| (3.0 * s).exp()).unwrap();
        let logd = m.log_integrate_exp(|s| 3.0 * s).unwrap();
        assert_relative_eq!(logd, direct.ln(), max_relative = 1e-12);

        let shifted = m.log_integrate_exp(|s| 1e5 + 3.0 * s).unwrap();
        assert_relative_eq!(shifted - 1e5, direct.ln(), epsilon = 1e-9);

        let atomic = DelayMeasure::atomic(1.0, &[(0.0, 1.0), (-1.0, 1.0)]).unwrap();
        let v = atomic.log_integrate_exp(|s| 800.0 + s).unwrap();
        assert_relative_eq!(v, 800.0 + (1.0 + (-1.0f64).exp()).ln(), epsilon = 1e-12);
    }

    #[test]
    fn nearest_nonzero_lag() {
        let m = DelayMeasure::atomic(2.0, &[(0.0, 1.0), (-2.0, 1.0)]).unwrap();
        assert_eq!(m.nearest_nonzero_lag(), 2.0);
        let d = DelayMeasure::new(1.0, vec![], vec![DensityPiece::constant(-1.0, 0.0, 1.0)]).unwrap();
        assert_eq!(d.nearest_nonzero_lag(), 0.0);
        assert_eq!(DelayMeasure::dirac_at_zero(1.0).unwrap().nearest_nonzero_lag(), f64::INFINITY);
    }
}
