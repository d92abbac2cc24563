//! Stationary response distributions of scalar multistable SDEs driven by
//! Ornstein-Uhlenbeck colored noise, and time-delay feedback controllers
//! that suppress rare transitions between the stable states.
//!
//! The crate has five parts:
//!
//! - [`model`]: polynomial potentials, noise intensities, control
//!   parameters, and the effective (rescaled) system induced by a
//!   small-delay controller;
//! - [`fpe`]: the stationary nonlinear Fokker-Planck solver with its
//!   self-consistency fixed-point iteration, plus the white-noise reference
//!   solution;
//! - [`analysis`]: density extrema, peak-drift cancellation, tail-inflation
//!   detection, and regime classification;
//! - [`mc`]: a Monte Carlo SDDE/SDE ensemble engine used as ground truth;
//! - [`sweep`]: control-parameter sweeps locating the regime boundaries.

// `!(x < y)` in the numeric guards: NaN must fail validation, which the
// suggested `x >= y` rewrite would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod csvio;
pub mod error;
pub mod fpe;
pub mod mc;
pub mod model;
pub mod poly;
pub mod quad;
pub mod sweep;

pub use analysis::{
    bistable_extrema, cancel_peak_drift, classify_regime, pdf_extrema_condition, ExtremaSet,
    RegimeLabel, RegimeReport,
};
pub use error::{Error, ErrorKind, Result};
pub use fpe::{
    self_consistency_i, solve_stationary, solve_white_noise, stationary_am, unnormalized_density,
    ClosureOrder, FixedPointConfig, SolutionMethod, StationaryPDF,
};
pub use mc::{
    l1_analytic_vs_histogram, l1_histograms, simulate_ou, simulate_rescaled, simulate_sdde,
    DelayBuffer, EmpiricalPDF, Integrator, MCConfig,
};
pub use model::{
    lyapunov_time, make_effective, zeta, ControlParams, EffectiveSystem, Interval, NoiseIntensity,
    ScalarModel,
};
pub use poly::Polynomial;
pub use quad::QuadratureGrid;
pub use sweep::{run_sweep, export_surface, RegimeSurface, SweepSpec};
