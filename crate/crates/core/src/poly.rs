//! Real polynomials with exact evaluation and differentiation.
//!
//! Potentials and noise intensities are restricted to polynomials so that the
//! drift derivatives entering the diffusion coefficient are exact; numerical
//! differentiation noise would otherwise leak into the exponent of the
//! stationary density.

use serde::{Deserialize, Serialize};

/// Dense polynomial, coefficients ordered lowest degree first.
///
/// The canonical form has no trailing zero coefficients (the zero polynomial
/// is represented as a single `0.0` coefficient).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: impl Into<Vec<f64>>) -> Self {
        let mut p = Polynomial {
            coeffs: coeffs.into(),
        };
        p.trim();
        p
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: vec![0.0] }
    }

    fn trim(&mut self) {
        while self.coeffs.len() > 1 && self.coeffs.last() == Some(&0.0) {
            self.coeffs.pop();
        }
        if self.coeffs.is_empty() {
            self.coeffs.push(0.0);
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() == 1 {
            return Polynomial::zero();
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &c)| i as f64 * c)
            .collect::<Vec<_>>();
        Polynomial::new(coeffs)
    }

    pub fn second_derivative(&self) -> Polynomial {
        self.derivative().derivative()
    }

    /// Coefficient-wise sum.
    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..n)
            .map(|i| {
                self.coeffs.get(i).copied().unwrap_or(0.0)
                    + other.coeffs.get(i).copied().unwrap_or(0.0)
            })
            .collect::<Vec<_>>();
        Polynomial::new(coeffs)
    }

    pub fn scale(&self, k: f64) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|&c| k * c).collect::<Vec<_>>())
    }

    /// `self + (gain/2) (x - shift)^2`, the quadratic well added by the
    /// feedback control, computed exactly on the coefficients.
    pub fn add_quadratic_well(&self, gain: f64, shift: f64) -> Polynomial {
        let well = Polynomial::new(vec![gain / 2.0 * shift * shift, -gain * shift, gain / 2.0]);
        self.add(&well)
    }
}
