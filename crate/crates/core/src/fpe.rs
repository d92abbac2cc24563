//! Stationary solution of the nonlinear Fokker-Planck equation for scalar
//! SDEs under Ornstein-Uhlenbeck excitation.
//!
//! The stationary density has the implicit closed form
//!
//! ```text
//! p0(x, R) = C(R) / (|sigma(x)| A_M(x, R)) * exp( -Phi(x, R) ),
//! Phi(x, R) = integral from x_lo to x of V'(y) / (sigma^2(y) A_M(y, R)) dy,
//! ```
//!
//! where the diffusion coefficient
//!
//! ```text
//! A_M(x, R) = 1/2 * sum_{m=0}^{M} [s_cor (zeta(x) - R)]^m / (1 - s_cor R)^{m+1}
//! ```
//!
//! depends on the response moment R = E[zeta(X)], itself a moment of p0. The
//! solver closes this loop with a damped fixed-point iteration seeded from
//! the classical (A = 1/2) solution, valid while R < 1/s_cor.

use crate::error::{Error, Result};
use crate::model::EffectiveSystem;
use crate::quad::{cumulative_trapezoid, QuadratureGrid};
use serde::{Deserialize, Serialize};

/// Truncation order of the fluctuation expansion in the diffusion
/// coefficient. Only M = 0 (the classical colored-noise approximation) and
/// M = 2 (the refined closure) are defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClosureOrder {
    M0,
    M2,
}

impl ClosureOrder {
    pub fn order(&self) -> usize {
        match self {
            ClosureOrder::M0 => 0,
            ClosureOrder::M2 => 2,
        }
    }
}

impl std::fmt::Display for ClosureOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.order())
    }
}

/// How a [`StationaryPDF`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolutionMethod {
    /// Classical stationary solution with A = 1/2 (white-noise reference).
    WhiteNoise,
    /// Nonlinear closure of the given order.
    Closure(ClosureOrder),
}

impl std::fmt::Display for SolutionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolutionMethod::WhiteNoise => write!(f, "wn"),
            SolutionMethod::Closure(m) => write!(f, "{m}"),
        }
    }
}

/// Fixed-point iteration controls. Defaults:
/// tolerance 1e-4 on successive R iterates, at most 100 iterations, and no
/// damping (relaxation 1.0) unless oscillation is detected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub relaxation: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            tol: 1e-4,
            max_iter: 100,
            relaxation: 1.0,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid("fixed-point tolerance", format!("{}", self.tol)));
        }
        if self.max_iter < 1 {
            return Err(Error::invalid("fixed-point max_iter", "must be >= 1"));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::invalid(
                "fixed-point relaxation",
                format!("{} not in (0, 1]", self.relaxation),
            ));
        }
        Ok(())
    }
}

/// Converged stationary response density on a quadrature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPDF {
    pub grid: QuadratureGrid,
    pub density: Vec<f64>,
    /// Converged response moment R = E[zeta(X)].
    pub r_moment: f64,
    pub method: SolutionMethod,
    pub norm_constant: f64,
    pub iterations_used: usize,
    /// Relaxation factor in effect when the iteration finished.
    pub relaxation_used: f64,
    pub warnings: Vec<String>,
}

impl StationaryPDF {
    /// Grid coordinate of the global density maximum.
    pub fn argmax(&self) -> f64 {
        let (i, _) = self
            .density
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |best, (i, &p)| {
                if p > best.1 {
                    (i, p)
                } else {
                    best
                }
            });
        self.grid.nodes()[i]
    }

    pub fn total_mass(&self) -> f64 {
        self.grid.simpson(&self.density)
    }
}

/// Stationary diffusion coefficient A_M(x, R).
///
/// Valid for R < 1/s_cor; for M = 2 the value is strictly positive there.
pub fn stationary_am(sys: &EffectiveSystem, m: ClosureOrder, r: f64, x: f64) -> Result<f64> {
    check_stationarity(sys.eff_scor, r)?;
    let zeta = sys.zeta(x)?;
    Ok(am_from_zeta(sys.eff_scor, m, r, zeta))
}

#[inline]
fn am_from_zeta(s_cor: f64, m: ClosureOrder, r: f64, zeta: f64) -> f64 {
    let denom = 1.0 - s_cor * r;
    match m {
        ClosureOrder::M0 => 0.5 / denom,
        ClosureOrder::M2 => {
            let t = s_cor * (zeta - r);
            0.5 * (1.0 / denom + t / (denom * denom) + t * t / (denom * denom * denom))
        }
    }
}

fn check_stationarity(s_cor: f64, r: f64) -> Result<()> {
    let limit = 1.0 / s_cor;
    if !(r < limit) {
        return Err(Error::Stationarity { r, limit });
    }
    Ok(())
}

/// Grid-sampled quantities of an effective system that are independent of R;
/// computed once and reused across fixed-point iterations.
struct SolverTables {
    spacing: f64,
    vprime: Vec<f64>,
    zeta: Vec<f64>,
    sigma_abs: Vec<f64>,
    sigma_sq: Vec<f64>,
}

impl SolverTables {
    fn build(sys: &EffectiveSystem, grid: &QuadratureGrid) -> Result<Self> {
        if grid.lo() < sys.domain.lo - 1e-12 || grid.hi() > sys.domain.hi + 1e-12 {
            return Err(Error::invalid(
                "grid",
                format!(
                    "grid [{}, {}] exceeds the model domain [{}, {}]",
                    grid.lo(),
                    grid.hi(),
                    sys.domain.lo,
                    sys.domain.hi
                ),
            ));
        }
        let vp = sys.eff_potential.derivative();
        let n = grid.len();
        let mut vprime = Vec::with_capacity(n);
        let mut zeta = Vec::with_capacity(n);
        let mut sigma_abs = Vec::with_capacity(n);
        let mut sigma_sq = Vec::with_capacity(n);
        for &x in grid.nodes() {
            let s = sys.eff_intensity.eval(x);
            if s == 0.0 {
                return Err(Error::VanishingIntensity { x });
            }
            vprime.push(vp.eval(x));
            zeta.push(sys.zeta(x)?);
            sigma_abs.push(s.abs());
            sigma_sq.push(s * s);
        }
        Ok(SolverTables {
            spacing: grid.spacing(),
            vprime,
            zeta,
            sigma_abs,
            sigma_sq,
        })
    }

    /// Unnormalized density f(x) = exp(-Phi) / (|sigma| A); `am` may be a
    /// constant 1/2 slot for the white-noise reference. The antiderivative is
    /// re-centered at its minimum before exponentiation so quartic potentials
    /// on wide domains cannot overflow; the normalization constant absorbs
    /// the shift.
    fn unnormalized(&self, am: &[f64], scratch: &mut Scratch) -> Vec<f64> {
        let n = self.vprime.len();
        scratch.integrand.clear();
        scratch.integrand.extend(
            (0..n).map(|i| self.vprime[i] / (self.sigma_sq[i] * am[i])),
        );
        cumulative_trapezoid(&scratch.integrand, self.spacing, &mut scratch.phi);
        let phi_min = scratch.phi.iter().copied().fold(f64::INFINITY, f64::min);
        (0..n)
            .map(|i| (-(scratch.phi[i] - phi_min)).exp() / (self.sigma_abs[i] * am[i]))
            .collect()
    }

    fn am_slice(&self, s_cor: f64, m: ClosureOrder, r: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.zeta.iter().map(|&z| am_from_zeta(s_cor, m, r, z)));
    }

    /// Ratio of Simpson integrals: moment of zeta under the (unnormalized)
    /// density.
    fn zeta_moment(&self, f: &[f64]) -> Result<f64> {
        let num = crate::quad::simpson(
            &f.iter()
                .zip(&self.zeta)
                .map(|(&fi, &zi)| fi * zi)
                .collect::<Vec<_>>(),
            self.spacing,
        );
        let den = crate::quad::simpson(f, self.spacing);
        if !(den.is_finite() && den > 0.0) || !num.is_finite() {
            return Err(Error::DegenerateDensity);
        }
        Ok(num / den)
    }
}

struct Scratch {
    integrand: Vec<f64>,
    phi: Vec<f64>,
    am: Vec<f64>,
}

impl Scratch {
    fn new() -> Self {
        Scratch {
            integrand: Vec::new(),
            phi: Vec::new(),
            am: Vec::new(),
        }
    }
}

/// Unnormalized stationary density for a fixed response moment R.
pub fn unnormalized_density(
    sys: &EffectiveSystem,
    m: ClosureOrder,
    r: f64,
    grid: &QuadratureGrid,
) -> Result<Vec<f64>> {
    check_stationarity(sys.eff_scor, r)?;
    let tables = SolverTables::build(sys, grid)?;
    let mut scratch = Scratch::new();
    tables.am_slice(sys.eff_scor, m, r, &mut scratch.am);
    let am = std::mem::take(&mut scratch.am);
    Ok(tables.unnormalized(&am, &mut scratch))
}

/// Right-hand side I(R) of the self-consistency equation R = I(R).
pub fn self_consistency_i(
    sys: &EffectiveSystem,
    m: ClosureOrder,
    r: f64,
    grid: &QuadratureGrid,
) -> Result<f64> {
    check_stationarity(sys.eff_scor, r)?;
    let tables = SolverTables::build(sys, grid)?;
    let mut scratch = Scratch::new();
    tables.am_slice(sys.eff_scor, m, r, &mut scratch.am);
    let am = std::mem::take(&mut scratch.am);
    let f = tables.unnormalized(&am, &mut scratch);
    tables.zeta_moment(&f)
}

/// Relative density below which grid endpoints are certified as negligible;
/// otherwise the finite truncation of the real line is suspect.
const TRUNCATION_LEVEL: f64 = 1e-10;

#[allow(clippy::too_many_arguments)]
fn finish(
    tables: &SolverTables,
    grid: &QuadratureGrid,
    f: Vec<f64>,
    r: f64,
    method: SolutionMethod,
    iterations_used: usize,
    relaxation_used: f64,
    mut warnings: Vec<String>,
) -> Result<StationaryPDF> {
    let mass = crate::quad::simpson(&f, tables.spacing);
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::DegenerateDensity);
    }
    let norm_constant = 1.0 / mass;
    let density: Vec<f64> = f.iter().map(|&v| v * norm_constant).collect();
    let peak = density.iter().copied().fold(0.0f64, f64::max);
    if density[0] > TRUNCATION_LEVEL * peak || density[density.len() - 1] > TRUNCATION_LEVEL * peak
    {
        warnings.push(format!(
            "domain truncation suspect: endpoint density fractions are {:.2e} and {:.2e} (tolerated: {TRUNCATION_LEVEL:.0e})",
            density[0] / peak,
            density[density.len() - 1] / peak,
        ));
    }
    Ok(StationaryPDF {
        grid: grid.clone(),
        density,
        r_moment: r,
        method,
        norm_constant,
        iterations_used,
        relaxation_used,
        warnings,
    })
}

/// Classical stationary solution with A = 1/2; the s_cor -> 0 reference and
/// the seed of the fixed-point iteration. The recorded R is the zeta moment
/// under this density.
pub fn solve_white_noise(sys: &EffectiveSystem, grid: &QuadratureGrid) -> Result<StationaryPDF> {
    let tables = SolverTables::build(sys, grid)?;
    let mut scratch = Scratch::new();
    let am = vec![0.5; grid.len()];
    let f = tables.unnormalized(&am, &mut scratch);
    let r = tables.zeta_moment(&f)?;
    finish(
        &tables,
        grid,
        f,
        r,
        SolutionMethod::WhiteNoise,
        0,
        1.0,
        Vec::new(),
    )
}

/// Runs the fixed-point scheme for the response moment R and returns the
/// normalized stationary density.
///
/// The seed R0 is the zeta moment under the A = 1/2 solution; iterates
/// follow `R <- (1 - w) R + w I(R)` until successive values differ by at
/// most `cfg.tol`. If the residual sign alternates three times in a row the
/// relaxation falls back to w = 0.5 (recorded in the result). A seed or an
/// iterate at or beyond 1/s_cor aborts with the offending value.
pub fn solve_stationary(
    sys: &EffectiveSystem,
    m: ClosureOrder,
    cfg: &FixedPointConfig,
    grid: &QuadratureGrid,
) -> Result<StationaryPDF> {
    cfg.validate()?;
    let tables = SolverTables::build(sys, grid)?;
    let mut scratch = Scratch::new();
    let mut warnings = Vec::new();
    let s_cor = sys.eff_scor;
    let limit = 1.0 / s_cor;

    // Algorithm seed: classical solution, A = 1/2.
    let f_seed = tables.unnormalized(&vec![0.5; grid.len()], &mut scratch);
    let mut r = tables.zeta_moment(&f_seed)?;
    if !(r < limit) {
        r = 0.9 * limit;
        warnings.push(format!(
            "white-noise seed violated R < 1/s_cor; clamped to {r}"
        ));
    }

    let mut omega = cfg.relaxation;
    let mut sign_flips = 0usize;
    let mut prev_residual = 0.0f64;
    let mut iterations_used = 0usize;
    let mut converged = false;
    let mut last_residual = f64::INFINITY;

    for iter in 1..=cfg.max_iter {
        tables.am_slice(s_cor, m, r, &mut scratch.am);
        let am = std::mem::take(&mut scratch.am);
        let f = tables.unnormalized(&am, &mut scratch);
        scratch.am = am;
        let i_r = tables.zeta_moment(&f)?;
        let residual = i_r - r;
        let r_next = (1.0 - omega) * r + omega * i_r;
        if !(r_next < limit) {
            return Err(Error::Stationarity { r: r_next, limit });
        }
        iterations_used = iter;
        last_residual = (r_next - r).abs();
        if last_residual <= cfg.tol {
            r = r_next;
            converged = true;
            break;
        }
        // damped sign-alternating residuals are ordinary convergence; only
        // a non-contracting alternation is an oscillation worth damping
        if iter > 1
            && residual != 0.0
            && residual.signum() == -prev_residual.signum()
            && residual.abs() >= prev_residual.abs()
        {
            sign_flips += 1;
            if sign_flips >= 3 && omega == cfg.relaxation {
                omega = 0.5;
                warnings.push(format!(
                    "oscillation detected after {iter} iterations; relaxation reduced to 0.5"
                ));
            }
        } else {
            sign_flips = 0;
        }
        prev_residual = residual;
        r = r_next;
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: iterations_used,
            residual: last_residual,
        });
    }

    tables.am_slice(s_cor, m, r, &mut scratch.am);
    let am = std::mem::take(&mut scratch.am);
    let f = tables.unnormalized(&am, &mut scratch);
    finish(
        &tables,
        grid,
        f,
        r,
        SolutionMethod::Closure(m),
        iterations_used,
        omega,
        warnings,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::presets;
    use crate::model::{make_effective, ControlParams, Interval, NoiseIntensity, ScalarModel};
    use crate::poly::Polynomial;
    use crate::quad::QuadratureGrid;
    use proptest::prelude::*;

    fn bistable_grid() -> QuadratureGrid {
        QuadratureGrid::new(-5.0, 5.0, 4001).unwrap()
    }

    fn bistable_sys(sigma: f64, s_cor: f64) -> EffectiveSystem {
        let mut model = presets::bistable().model;
        model.intensity = NoiseIntensity::additive(sigma).unwrap();
        model.s_cor = s_cor;
        model.as_effective()
    }

    #[test]
    fn am_tends_to_one_half_in_the_white_noise_limit() {
        let sys = bistable_sys(1.2, 1e-12);
        for m in [ClosureOrder::M0, ClosureOrder::M2] {
            for x in [-2.0, 0.0, 1.3] {
                let a = stationary_am(&sys, m, -3.0, x).unwrap();
                assert!((a - 0.5).abs() < 1e-9, "A_{m:?}({x}) = {a}");
            }
        }
    }

    #[test]
    fn am_collapses_to_m0_value_when_zeta_equals_r() {
        // only the m = 0 term survives: A = 1 / (2 (1 - s_cor R))
        let sys = bistable_sys(1.2, 0.25);
        // zeta(x) = 1 - 3x^2 = R  =>  x = sqrt((1 - R)/3)
        let r = -2.0;
        let x = ((1.0 - r) / 3.0f64).sqrt();
        let a = stationary_am(&sys, ClosureOrder::M2, r, x).unwrap();
        assert!((a - 0.5 / (1.0 - 0.25 * r)).abs() < 1e-12);
    }

    #[test]
    fn am_matches_factored_quadratic_form() {
        // A_2 written as the explicit quadratic in R over (1 - s R)^3
        let sys = bistable_sys(1.2, 0.25);
        let s = 0.25f64;
        for (x, r) in [(0.0, -2.0038), (1.5, -1.0), (-2.0, 0.5)] {
            let z = sys.zeta(x).unwrap();
            let factored = (3.0 * s * s * r * r - 3.0 * s * (s * z + 1.0) * r
                + s * s * z * z
                + s * z
                + 1.0)
                / (2.0 * (1.0 - s * r).powi(3));
            let a = stationary_am(&sys, ClosureOrder::M2, r, x).unwrap();
            assert!((a - factored).abs() < 1e-12 * factored.abs().max(1.0));
        }
    }

    #[test]
    fn am_rejects_stationarity_violation() {
        let sys = bistable_sys(1.2, 0.25);
        assert!(matches!(
            stationary_am(&sys, ClosureOrder::M2, 4.0, 0.0),
            Err(Error::Stationarity { .. })
        ));
    }

    #[test]
    fn white_noise_density_is_boltzmann_for_additive_intensity() {
        let sys = bistable_sys(1.2, 0.25);
        let grid = bistable_grid();
        let pdf = solve_white_noise(&sys, &grid).unwrap();
        // compare against exp(-2 V / sigma^2) normalized on the same grid
        let mut reference: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&x| (-2.0 * sys.eff_potential.eval(x) / 1.44).exp())
            .collect();
        let z = grid.simpson(&reference);
        reference.iter_mut().for_each(|v| *v /= z);
        // the solver's antiderivative is a cumulative trapezoid, so tails
        // carry an O(h^2) quadrature offset relative to the exact exponent
        for (p, q) in pdf.density.iter().zip(&reference) {
            assert!((p - q).abs() < 1e-6, "{p} vs {q}");
        }
        assert!((pdf.total_mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_problem_gives_even_density_and_half_domain_moment() {
        let sys = bistable_sys(1.2, 0.25);
        let grid = bistable_grid();
        let pdf = solve_stationary(&sys, ClosureOrder::M0, &FixedPointConfig::default(), &grid)
            .unwrap();
        let n = pdf.density.len();
        let mut asym = 0.0f64;
        for i in 0..n {
            asym = asym.max((pdf.density[i] - pdf.density[n - 1 - i]).abs());
        }
        assert!(asym < 1e-8, "max asymmetry {asym}");
        // zeta moment over the right half equals the full-grid moment
        let half = &pdf.density[(n - 1) / 2..];
        let zeta_half: Vec<f64> = grid.nodes()[(n - 1) / 2..]
            .iter()
            .zip(half)
            .map(|(&x, &p)| p * sys.zeta(x).unwrap())
            .collect();
        let r_half = crate::quad::simpson(&zeta_half, grid.spacing())
            / crate::quad::simpson(half, grid.spacing());
        assert!(
            (r_half - pdf.r_moment).abs() < 1e-5,
            "half-domain {} vs {}",
            r_half,
            pdf.r_moment
        );
    }

    #[test]
    fn bistable_benchmark_converges_to_known_moment() {
        // frozen from an independent implementation of the same equations
        let sys = bistable_sys(1.2, 0.25);
        let grid = bistable_grid();
        let cfg = FixedPointConfig::default();
        let pdf = solve_stationary(&sys, ClosureOrder::M2, &cfg, &grid).unwrap();
        assert!((pdf.r_moment - (-2.003833)).abs() < 2e-3, "R = {}", pdf.r_moment);
        assert!(pdf.iterations_used <= 5, "iters = {}", pdf.iterations_used);
        assert!((pdf.total_mass() - 1.0).abs() < 1e-6);
        // bimodal with peaks drifted off the wells
        let peak = pdf.argmax().abs();
        assert!((peak - 1.15).abs() <= 2.0 * grid.spacing(), "peak at {peak}");
        // fixed-point validity: one more application of I stays within tol
        let i_r = self_consistency_i(&sys, ClosureOrder::M2, pdf.r_moment, &grid).unwrap();
        assert!((i_r - pdf.r_moment).abs() <= cfg.tol);
        assert!(pdf.r_moment < 1.0 / sys.eff_scor);
    }

    #[test]
    fn converged_moment_matches_dense_scan_oracle() {
        // brute-force root of I(R) - R = 0 located by scan + bisection,
        // independent of the iteration path
        let sys = bistable_sys(1.2, 0.25);
        let grid = bistable_grid();
        let cfg = FixedPointConfig::default();
        let pdf = solve_stationary(&sys, ClosureOrder::M2, &cfg, &grid).unwrap();

        let h = |r: f64| self_consistency_i(&sys, ClosureOrder::M2, r, &grid).unwrap() - r;
        let mut bracket = None;
        let mut prev = (-20.0, h(-20.0));
        let top = 1.0 / sys.eff_scor - 1e-6;
        let mut r = -20.0;
        while r < top.min(3.0) {
            r += 0.05;
            let val = h(r);
            if prev.1 * val <= 0.0 {
                bracket = Some((prev.0, r));
                break;
            }
            prev = (r, val);
        }
        let (mut lo, mut hi) = bracket.expect("dense scan found a sign change");
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if h(lo) * h(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        assert!(
            (root - pdf.r_moment).abs() <= 2.0 * cfg.tol,
            "scan root {root} vs iterated {}",
            pdf.r_moment
        );
    }

    #[test]
    fn constant_zeta_makes_i_constant() {
        // quadratic potential V = x^2/2: zeta = -1 identically, so I(R) = -1
        let model = ScalarModel::new(
            Polynomial::new(vec![0.0, 0.0, 0.5]),
            NoiseIntensity::additive(1.0).unwrap(),
            0.1,
            Interval::new(-8.0, 8.0).unwrap(),
        )
        .unwrap();
        let sys = model.as_effective();
        let grid = QuadratureGrid::new(-8.0, 8.0, 2001).unwrap();
        for r in [-5.0, -1.0, 0.0, 5.0] {
            let i = self_consistency_i(&sys, ClosureOrder::M0, r, &grid).unwrap();
            assert!((i - (-1.0)).abs() < 1e-9, "I({r}) = {i}");
        }
    }

    #[test]
    fn white_noise_limit_closures_agree_pointwise() {
        let sys = bistable_sys(1.2, 1e-8);
        let grid = bistable_grid();
        let cfg = FixedPointConfig::default();
        let wn = solve_white_noise(&sys, &grid).unwrap();
        let m0 = solve_stationary(&sys, ClosureOrder::M0, &cfg, &grid).unwrap();
        let m2 = solve_stationary(&sys, ClosureOrder::M2, &cfg, &grid).unwrap();
        let peak = wn.density.iter().copied().fold(0.0f64, f64::max);
        for i in 0..grid.len() {
            assert!((m0.density[i] - wn.density[i]).abs() <= 1e-6 * peak);
            assert!((m2.density[i] - wn.density[i]).abs() <= 1e-6 * peak);
        }
    }

    #[test]
    fn laser_controlled_density_peaks_near_the_shift() {
        let preset = presets::laser();
        let ctrl = ControlParams::new(4.0, 0.05, 42.0).unwrap();
        let sys = make_effective(&preset.model, &ctrl).unwrap();
        let grid = QuadratureGrid::new(0.5, 90.0, 4001).unwrap();
        let pdf = solve_stationary(&sys, ClosureOrder::M2, &FixedPointConfig::default(), &grid)
            .unwrap();
        let peak = pdf.argmax();
        assert!((peak - 42.0).abs() < 2.5, "peak at {peak}");
        assert!((pdf.total_mass() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn inadmissible_seed_is_clamped_then_breach_is_reported() {
        // inverted parabola: zeta = +1 everywhere, so I(R) = 1 while the
        // stationarity bound is 1/s_cor = 0.5; the white-noise seed gets
        // clamped and the first update must report the breach
        let model = ScalarModel::new(
            Polynomial::new(vec![0.0, 0.0, -0.5]),
            NoiseIntensity::additive(1.0).unwrap(),
            2.0,
            Interval::new(-1.0, 1.0).unwrap(),
        )
        .unwrap();
        let grid = QuadratureGrid::new(-1.0, 1.0, 201).unwrap();
        let err = solve_stationary(
            &model.as_effective(),
            ClosureOrder::M2,
            &FixedPointConfig::default(),
            &grid,
        )
        .unwrap_err();
        match err {
            Error::Stationarity { r, limit } => {
                assert_eq!(limit, 0.5);
                assert!(r >= limit, "offending R = {r}");
            }
            other => panic!("expected a stationarity breach, got {other}"),
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let sys = bistable_sys(1.2, 0.25);
        let grid = bistable_grid();
        let cfg = FixedPointConfig {
            tol: 1e-15,
            max_iter: 2,
            relaxation: 1.0,
        };
        assert!(matches!(
            solve_stationary(&sys, ClosureOrder::M2, &cfg, &grid),
            Err(Error::NoConvergence { iterations: 2, .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        // positivity of the M = 2 diffusion coefficient over random
        // admissible draws
        #[test]
        fn a2_is_strictly_positive(
            s_cor in 1e-3f64..1.0,
            zeta in -50.0f64..50.0,
            u in 0.0f64..1.0,
        ) {
            // R anywhere below the stationarity bound
            let r = 1.0 / s_cor - 1e-6 - u * 60.0;
            let a = am_from_zeta(s_cor, ClosureOrder::M2, r, zeta);
            prop_assert!(a > 0.0, "A_2 = {a} at s_cor={s_cor}, R={r}, zeta={zeta}");
        }

        // every successful solve returns a normalized density
        #[test]
        fn solves_are_normalized(sigma in 0.6f64..1.6, s_cor in 0.05f64..0.5) {
            let sys = bistable_sys(sigma, s_cor);
            let grid = QuadratureGrid::new(-5.0, 5.0, 2001).unwrap();
            let pdf = solve_stationary(&sys, ClosureOrder::M2, &FixedPointConfig::default(), &grid).unwrap();
            prop_assert!((pdf.total_mass() - 1.0).abs() < 1e-6);
            prop_assert!(pdf.density.iter().all(|&p| p >= 0.0 && p.is_finite()));
            prop_assert!(pdf.r_moment < 1.0 / sys.eff_scor);
        }
    }
}
