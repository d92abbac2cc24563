//! Uniform grids and the quadrature rules used throughout the solver:
//! composite Simpson for definite integrals and a cumulative trapezoid for
//! the antiderivative in the stationary-density exponent.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniform quadrature grid with an odd node count (composite-Simpson
/// compatible), covering `[lo, hi]` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    spacing: f64,
}

pub const DEFAULT_GRID_NODES: usize = 4001;

impl QuadratureGrid {
    pub fn new(lo: f64, hi: f64, n_nodes: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(
                "grid bounds",
                format!("need finite lo < hi, got [{lo}, {hi}]"),
            ));
        }
        if n_nodes < 3 || n_nodes.is_multiple_of(2) {
            return Err(Error::invalid(
                "grid node count",
                format!("need an odd count >= 3, got {n_nodes}"),
            ));
        }
        let spacing = (hi - lo) / (n_nodes - 1) as f64;
        let mut nodes = (0..n_nodes)
            .map(|i| lo + i as f64 * spacing)
            .collect::<Vec<_>>();
        nodes[n_nodes - 1] = hi;
        Ok(QuadratureGrid { nodes, spacing })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lo(&self) -> f64 {
        self.nodes[0]
    }

    pub fn hi(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Composite Simpson integral of samples taken on this grid.
    pub fn simpson(&self, values: &[f64]) -> f64 {
        simpson(values, self.spacing)
    }
}

/// Composite Simpson rule on a uniform grid with an odd number of samples.
pub fn simpson(values: &[f64], spacing: f64) -> f64 {
    assert!(
        values.len() >= 3 && values.len() % 2 == 1,
        "composite Simpson needs an odd sample count >= 3"
    );
    let mut s4 = 0.0;
    let mut s2 = 0.0;
    for (i, &v) in values.iter().enumerate().skip(1).take(values.len() - 2) {
        if i % 2 == 1 {
            s4 += v;
        } else {
            s2 += v;
        }
    }
    (values[0] + values[values.len() - 1] + 4.0 * s4 + 2.0 * s2) * spacing / 3.0
}

/// Cumulative trapezoid running sum: `out[i] = integral from node 0 to node i`.
pub fn cumulative_trapezoid(values: &[f64], spacing: f64, out: &mut Vec<f64>) {
    out.clear();
    out.reserve(values.len());
    out.push(0.0);
    let mut acc = 0.0;
    for w in values.windows(2) {
        acc += (w[0] + w[1]) * spacing / 2.0;
        out.push(acc);
    }
}
