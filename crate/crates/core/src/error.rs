use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide error type. `kind()` partitions the variants into the three
/// failure classes that callers (notably the CLI exit codes) care about.
#[derive(Debug, Error)]
pub enum Error {
    #[error("control constraint violated: a*tau = {product} must be < 1 (a = {a}, tau = {tau})")]
    GainDelayProduct { a: f64, tau: f64, product: f64 },

    #[error("noise intensity vanishes on the computation domain near x = {x}")]
    VanishingIntensity { x: f64 },

    #[error("x = {x} is outside the model domain [{lo}, {hi}]")]
    OutsideDomain { x: f64, lo: f64, hi: f64 },

    #[error("x = {x} is not a stable equilibrium: V''(x) = {second_derivative} <= 0")]
    NotStableEquilibrium { x: f64, second_derivative: f64 },

    #[error("stationarity condition violated: R = {r} >= 1/s_cor = {limit}")]
    Stationarity { r: f64, limit: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("density is identically zero on the grid; check the domain and overflow handling")]
    DegenerateDensity,

    #[error("grid too coarse to resolve the density: {sign_changes} second-derivative sign changes (> 12); use a finer grid")]
    GridResolution { sign_changes: usize },

    #[error("simulation produced a non-finite state at step {step} of path {path}")]
    NumericalBlowup { path: u64, step: usize },

    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },

    #[error("i/o error for {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {why}")]
    Parse { path: PathBuf, why: String },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Convergence,
    Io,
}

impl Error {
    pub fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            why: why.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NoConvergence { .. }
            | Error::Stationarity { .. }
            | Error::DegenerateDensity
            | Error::NumericalBlowup { .. } => ErrorKind::Convergence,
            Error::Io { .. } | Error::Parse { .. } => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
