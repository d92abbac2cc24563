//! Ground-truth Monte Carlo engine: the uncontrolled SDE, the controlled
//! SDDE, and the rescaled approximating SDE, each augmented with the scalar
//! OU filter, integrated with a Heun predictor-corrector and binned into
//! stationary histograms.
//!
//! The white noise enters only the OU filter, which is discretized exactly;
//! the state equation sees a smooth colored input, so a deterministic-style
//! predictor-corrector per step is weak-order adequate.
//!
//! Paths are embarrassingly parallel. Each path owns a ChaCha stream keyed
//! by its index, and histograms are reduced as integer counts, so results
//! are bit-identical for any worker count.

use crate::error::{Error, Result};
use crate::model::{make_effective, ControlParams, ScalarModel};
use crate::poly::Polynomial;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrator {
    Euler,
    Heun,
}

impl std::fmt::Display for Integrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Integrator::Euler => write!(f, "euler"),
            Integrator::Heun => write!(f, "heun"),
        }
    }
}

impl std::str::FromStr for Integrator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Integrator::Euler),
            "heun" => Ok(Integrator::Heun),
            other => Err(Error::invalid("integrator", format!("'{other}'"))),
        }
    }
}

/// Ensemble simulation controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    pub dt: f64,
    pub t_end: f64,
    pub burn_in: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub histogram_bins: usize,
    /// Samples retained every this many steps after burn-in.
    pub sample_stride: usize,
    /// Initial condition (and constant pre-history for delayed equations).
    pub x0: f64,
    pub integrator: Integrator,
}

impl MCConfig {
    pub fn validate(&self, delay: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("mc config", format!("dt = {}", self.dt)));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::invalid("mc config", format!("t_end = {}", self.t_end)));
        }
        if !(self.burn_in >= 0.0 && self.burn_in < self.t_end) {
            return Err(Error::invalid(
                "mc config",
                format!("burn_in = {} must lie in [0, t_end)", self.burn_in),
            ));
        }
        if self.n_paths < 1 {
            return Err(Error::invalid("mc config", "n_paths must be >= 1"));
        }
        if self.histogram_bins < 10 {
            return Err(Error::invalid("mc config", "histogram_bins must be >= 10"));
        }
        if self.sample_stride < 1 {
            return Err(Error::invalid("mc config", "sample_stride must be >= 1"));
        }
        if delay > 0.0 && self.dt >= delay {
            return Err(Error::invalid(
                "mc config",
                format!(
                    "dt = {} must be smaller than the delay tau = {delay} (the delay buffer needs at least one slot)",
                    self.dt
                ),
            ));
        }
        Ok(())
    }
}

/// Ring buffer holding the delayed state history.
///
/// Reads return the sample written `len` pushes earlier; before the first
/// wrap they return the constant initial history.
#[derive(Debug, Clone)]
pub struct DelayBuffer {
    ring: Vec<f64>,
    step: usize,
}

impl DelayBuffer {
    pub fn new(len: usize, x0: f64) -> Self {
        assert!(len >= 1, "delay buffer needs at least one slot");
        DelayBuffer {
            ring: vec![x0; len],
            step: 0,
        }
    }

    /// X(t - tau) at the current step.
    #[inline]
    pub fn read_delayed(&self) -> f64 {
        self.ring[self.step % self.ring.len()]
    }

    /// X(t + dt - tau), needed by the corrector stage; equals the current
    /// state when the delay is a single step.
    #[inline]
    pub fn read_delayed_ahead(&self, current: f64) -> f64 {
        if self.ring.len() == 1 {
            current
        } else {
            self.ring[(self.step + 1) % self.ring.len()]
        }
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        let slot = self.step % self.ring.len();
        self.ring[slot] = x;
        self.step += 1;
    }
}

/// Histogram estimate of a stationary density.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPDF {
    pub edges: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub n_samples: u64,
    /// Paths aborted by the blow-up guard; their samples are discarded.
    pub aborted_paths: u64,
    /// Retained-range misses: samples falling outside the histogram support.
    pub out_of_range: u64,
    pub meta: RunMeta,
}

/// Provenance recorded alongside every histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub equation: String,
    pub seed: u64,
    pub dt: f64,
    pub n_paths: usize,
    pub integrator: Integrator,
}

impl EmpiricalPDF {
    pub fn bin_centers(&self) -> Vec<f64> {
        self.edges
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect()
    }
}

/// Exact-discretization update factors for the scalar OU filter with
/// autocorrelation (1/(2 s_cor)) exp(-|dt|/s_cor).
#[derive(Debug, Clone, Copy)]
struct OuStep {
    decay: f64,
    kick: f64,
    stationary_std: f64,
}

impl OuStep {
    fn new(s_cor: f64, dt: f64) -> Result<Self> {
        if !(s_cor > 0.0 && s_cor.is_finite()) {
            return Err(Error::invalid("ou", format!("s_cor = {s_cor} must be > 0")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("ou", format!("dt = {dt} must be > 0")));
        }
        let decay = (-dt / s_cor).exp();
        Ok(OuStep {
            decay,
            kick: ((1.0 - decay * decay) / (2.0 * s_cor)).sqrt(),
            stationary_std: (1.0 / (2.0 * s_cor)).sqrt(),
        })
    }

    #[inline]
    fn init<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.stationary_std * z
    }

    #[inline]
    fn advance<R: rand::Rng>(&self, xi: f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        xi * self.decay + self.kick * z
    }
}

/// One exactly-discretized OU path including the initial stationary draw:
/// `xi[k+1] = xi[k] exp(-dt/s_cor) + sqrt((1 - exp(-2 dt/s_cor))/(2 s_cor)) N(0,1)`.
pub fn simulate_ou(s_cor: f64, dt: f64, n_steps: usize, seed: u64) -> Result<Vec<f64>> {
    let ou = OuStep::new(s_cor, dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = Vec::with_capacity(n_steps + 1);
    let mut xi = ou.init(&mut rng);
    path.push(xi);
    for _ in 0..n_steps {
        xi = ou.advance(xi, &mut rng);
        path.push(xi);
    }
    Ok(path)
}

/// Drift evaluation shared by the three equation forms. `delayed` is the
/// state fed to the feedback term (the current state when there is no
/// delay).
struct Dynamics {
    /// Coefficients of -V'(x) (or -Vtilde' for the rescaled form).
    minus_vprime: Vec<f64>,
    gain: f64,
    shift: f64,
    /// sigma(x) as (constant, linear, polynomial) cases collapsed into a
    /// small closure-free representation.
    sigma: SigmaEval,
    s_cor: f64,
    delay_steps: usize,
}

enum SigmaEval {
    Constant(f64),
    Linear(f64),
    Poly(Vec<f64>),
}

impl SigmaEval {
    fn from_intensity(intensity: &crate::model::NoiseIntensity) -> Self {
        match intensity {
            crate::model::NoiseIntensity::Additive { sigma } => SigmaEval::Constant(*sigma),
            crate::model::NoiseIntensity::LinearMultiplicative { sigma } => {
                SigmaEval::Linear(*sigma)
            }
            crate::model::NoiseIntensity::PolynomialIntensity { poly } => {
                SigmaEval::Poly(poly.coeffs().to_vec())
            }
        }
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        match self {
            SigmaEval::Constant(s) => *s,
            SigmaEval::Linear(s) => s * x,
            SigmaEval::Poly(c) => horner(c, x),
        }
    }
}

#[inline]
fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

impl Dynamics {
    #[inline]
    fn drift(&self, x: f64, delayed: f64, xi: f64) -> f64 {
        horner(&self.minus_vprime, x) - self.gain * (delayed - self.shift)
            + self.sigma.eval(x) * xi
    }
}

fn minus_derivative_coeffs(potential: &Polynomial) -> Vec<f64> {
    potential
        .derivative()
        .coeffs()
        .iter()
        .map(|&c| -c)
        .collect()
}

struct PathResult {
    counts: Vec<u64>,
    n_samples: u64,
    out_of_range: u64,
    aborted_paths: u64,
}

impl PathResult {
    fn empty(n_bins: usize) -> Self {
        PathResult {
            counts: vec![0u64; n_bins],
            n_samples: 0,
            out_of_range: 0,
            aborted_paths: 0,
        }
    }

    fn merge(mut self, other: PathResult) -> Self {
        self.counts
            .iter_mut()
            .zip(&other.counts)
            .for_each(|(a, &b)| *a += b);
        self.n_samples += other.n_samples;
        self.out_of_range += other.out_of_range;
        self.aborted_paths += other.aborted_paths;
        self
    }
}

#[allow(clippy::too_many_arguments)]
fn run_path(
    dyn_: &Dynamics,
    cfg: &MCConfig,
    ou: &OuStep,
    path_index: u64,
    lo: f64,
    bin_width_inv: f64,
    n_bins: usize,
    blowup_bound: f64,
) -> Result<PathResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(path_index);
    let n_steps = (cfg.t_end / cfg.dt).round() as usize;
    let burn_steps = (cfg.burn_in / cfg.dt).round() as usize;

    let mut counts = vec![0u64; n_bins];
    let mut n_samples = 0u64;
    let mut out_of_range = 0u64;

    let mut x = cfg.x0;
    let mut xi = ou.init(&mut rng);
    let mut buffer = (dyn_.delay_steps > 0).then(|| DelayBuffer::new(dyn_.delay_steps, cfg.x0));

    for k in 0..n_steps {
        let xi_next = ou.advance(xi, &mut rng);
        let (d_now, d_next_slot) = match &buffer {
            Some(buf) => (buf.read_delayed(), Some(buf.read_delayed_ahead(x))),
            None => (x, None),
        };
        let f1 = dyn_.drift(x, d_now, xi);
        let predictor = x + cfg.dt * f1;
        let x_next = match cfg.integrator {
            Integrator::Euler => predictor,
            Integrator::Heun => {
                let d_next = d_next_slot.unwrap_or(predictor);
                let f2 = dyn_.drift(predictor, d_next, xi_next);
                x + 0.5 * cfg.dt * (f1 + f2)
            }
        };
        if let Some(buf) = &mut buffer {
            buf.push(x);
        }
        if !x_next.is_finite() {
            return Err(Error::NumericalBlowup {
                path: path_index,
                step: k,
            });
        }
        if x_next.abs() > blowup_bound {
            // discard everything this path produced
            let mut empty = PathResult::empty(counts.len());
            empty.aborted_paths = 1;
            return Ok(empty);
        }
        x = x_next;
        xi = xi_next;
        if k + 1 > burn_steps && (k - burn_steps).is_multiple_of(cfg.sample_stride) {
            let rel = (x - lo) * bin_width_inv;
            if rel >= 0.0 && rel < n_bins as f64 {
                counts[rel as usize] += 1;
                n_samples += 1;
            } else {
                out_of_range += 1;
            }
        }
    }
    Ok(PathResult {
        counts,
        n_samples,
        out_of_range,
        aborted_paths: 0,
    })
}

fn run_ensemble(dyn_: &Dynamics, cfg: &MCConfig, equation: &str, lo: f64, hi: f64) -> Result<EmpiricalPDF> {
    let ou = OuStep::new(dyn_.s_cor, cfg.dt)?;
    let n_bins = cfg.histogram_bins;
    let bin_width = (hi - lo) / n_bins as f64;
    let blowup_bound = 1e3 * (hi - lo);

    let merged = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|path| {
            run_path(
                dyn_,
                cfg,
                &ou,
                path,
                lo,
                1.0 / bin_width,
                n_bins,
                blowup_bound,
            )
        })
        .try_reduce(|| PathResult::empty(n_bins), |a, b| Ok(a.merge(b)))?;

    if merged.n_samples == 0 {
        return Err(Error::DegenerateDensity);
    }
    let total = merged.n_samples as f64;
    let probabilities = merged.counts.iter().map(|&c| c as f64 / total).collect();
    let edges = (0..=n_bins)
        .map(|i| lo + bin_width * i as f64)
        .collect::<Vec<_>>();
    Ok(EmpiricalPDF {
        edges,
        probabilities,
        n_samples: merged.n_samples,
        aborted_paths: merged.aborted_paths,
        out_of_range: merged.out_of_range,
        meta: RunMeta {
            equation: equation.to_string(),
            seed: cfg.seed,
            dt: cfg.dt,
            n_paths: cfg.n_paths,
            integrator: cfg.integrator,
        },
    })
}

/// Integrates the controlled SDDE
/// `dX = [-V'(X) - a (X(t - tau) - xhat) + sigma(X) xi] dt`
/// with the OU input discretized exactly and a constant history X = x0 on
/// [-tau, 0]. With `a = 0` (or `tau = 0`) this is the uncontrolled (or
/// current-time controlled) SDE.
pub fn simulate_sdde(
    model: &ScalarModel,
    ctrl: &ControlParams,
    cfg: &MCConfig,
) -> Result<EmpiricalPDF> {
    ctrl.check_gain_delay()?;
    cfg.validate(if ctrl.gain != 0.0 { ctrl.delay } else { 0.0 })?;
    let delay_steps = if ctrl.gain != 0.0 && ctrl.delay > 0.0 {
        (ctrl.delay / cfg.dt).ceil() as usize
    } else {
        0
    };
    let dyn_ = Dynamics {
        minus_vprime: minus_derivative_coeffs(&model.potential),
        gain: ctrl.gain,
        shift: ctrl.shift,
        sigma: SigmaEval::from_intensity(&model.intensity),
        s_cor: model.s_cor,
        delay_steps,
    };
    run_ensemble(&dyn_, cfg, "sdde", model.domain.lo, model.domain.hi)
}

/// Integrates the non-delayed rescaled approximating SDE
/// `dX = -Vtilde'(X) ds + sigma_tilde(X) xi_tilde ds` with OU noise at the
/// rescaled correlation time; the Monte Carlo ground for the small-delay
/// approximation.
pub fn simulate_rescaled(
    model: &ScalarModel,
    ctrl: &ControlParams,
    cfg: &MCConfig,
) -> Result<EmpiricalPDF> {
    let eff = make_effective(model, ctrl)?;
    cfg.validate(0.0)?;
    let dyn_ = Dynamics {
        minus_vprime: minus_derivative_coeffs(&eff.eff_potential),
        gain: 0.0,
        shift: 0.0,
        sigma: SigmaEval::from_intensity(&eff.eff_intensity),
        s_cor: eff.eff_scor,
        delay_steps: 0,
    };
    run_ensemble(&dyn_, cfg, "rescaled", model.domain.lo, model.domain.hi)
}

/// Half the total variation distance between two binned probability
/// vectors: `(1/2) sum |p_i - q_i|`, in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Report {
    pub distance: f64,
    pub disjoint_supports: bool,
}

/// Probability mass of an analytic density integrated over histogram cells
/// (cumulative-trapezoid CDF interpolated at the edges).
pub fn rebin_density(grid_x: &[f64], density: &[f64], edges: &[f64]) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(grid_x.len());
    cdf.push(0.0);
    let mut acc = 0.0;
    for i in 1..grid_x.len() {
        acc += 0.5 * (density[i] + density[i - 1]) * (grid_x[i] - grid_x[i - 1]);
        cdf.push(acc);
    }
    let interp = |xq: f64| -> f64 {
        if xq <= grid_x[0] {
            return 0.0;
        }
        if xq >= grid_x[grid_x.len() - 1] {
            return acc;
        }
        let mut idx = match grid_x.binary_search_by(|v| v.partial_cmp(&xq).unwrap()) {
            Ok(i) => return cdf[i.min(cdf.len() - 1)],
            Err(i) => i,
        };
        idx = idx.clamp(1, grid_x.len() - 1);
        let t = (xq - grid_x[idx - 1]) / (grid_x[idx] - grid_x[idx - 1]);
        cdf[idx - 1] + t * (cdf[idx] - cdf[idx - 1])
    };
    edges
        .windows(2)
        .map(|w| (interp(w[1]) - interp(w[0])).max(0.0))
        .collect()
}

/// L1 distance between two histograms on identical edges.
pub fn l1_histograms(p: &EmpiricalPDF, q: &EmpiricalPDF) -> Result<L1Report> {
    if p.edges.len() != q.edges.len()
        || p.edges
            .iter()
            .zip(&q.edges)
            .any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::invalid(
            "l1 distance",
            "histograms must share identical bin edges",
        ));
    }
    Ok(l1_vectors(&p.probabilities, &q.probabilities))
}

/// L1 distance between an analytic density (rebinned by cell integration)
/// and a histogram.
pub fn l1_analytic_vs_histogram(
    grid_x: &[f64],
    density: &[f64],
    hist: &EmpiricalPDF,
) -> L1Report {
    let p = rebin_density(grid_x, density, &hist.edges);
    l1_vectors(&p, &hist.probabilities)
}

fn l1_vectors(p: &[f64], q: &[f64]) -> L1Report {
    let distance = 0.5
        * p.iter()
            .zip(q)
            .map(|(&a, &b)| (a - b).abs())
            .sum::<f64>();
    let overlap = p
        .iter()
        .zip(q)
        .any(|(&a, &b)| a > 0.0 && b > 0.0);
    L1Report {
        distance,
        disjoint_supports: !overlap,
    }
}
