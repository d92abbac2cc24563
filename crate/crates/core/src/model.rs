//! Scalar stochastic models, control parameters, and the effective-system
//! transformation induced by small-delay feedback control.
//!
//! All types here are immutable after construction and safe to share across
//! workers; every operation is a pure function.

use crate::error::{Error, Result};
use crate::poly::Polynomial;
use serde::{Deserialize, Serialize};

/// Closed computation interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(
                "domain",
                format!("need finite lo < hi, got [{lo}, {hi}]"),
            ));
        }
        Ok(Interval { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// State-dependent noise intensity sigma(x).
///
/// `LinearMultiplicative` is a dedicated kind rather than a degenerate
/// polynomial so that the laser-specific closed forms can assert their
/// applicability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NoiseIntensity {
    /// sigma(x) = sigma
    Additive { sigma: f64 },
    /// sigma(x) = sigma * x
    LinearMultiplicative { sigma: f64 },
    /// sigma(x) given by an arbitrary polynomial
    PolynomialIntensity { poly: Polynomial },
}

impl NoiseIntensity {
    pub fn additive(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::invalid("noise intensity", format!("sigma = {sigma}")));
        }
        Ok(NoiseIntensity::Additive { sigma })
    }

    pub fn linear_multiplicative(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::invalid("noise intensity", format!("sigma = {sigma}")));
        }
        Ok(NoiseIntensity::LinearMultiplicative { sigma })
    }

    pub fn polynomial(poly: Polynomial) -> Self {
        NoiseIntensity::PolynomialIntensity { poly }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            NoiseIntensity::Additive { sigma } => *sigma,
            NoiseIntensity::LinearMultiplicative { sigma } => sigma * x,
            NoiseIntensity::PolynomialIntensity { poly } => poly.eval(x),
        }
    }

    /// d sigma / dx
    pub fn eval_derivative(&self, x: f64) -> f64 {
        match self {
            NoiseIntensity::Additive { .. } => 0.0,
            NoiseIntensity::LinearMultiplicative { sigma } => *sigma,
            NoiseIntensity::PolynomialIntensity { poly } => poly.derivative().eval(x),
        }
    }

    pub fn is_additive(&self) -> bool {
        matches!(self, NoiseIntensity::Additive { .. })
    }

    /// Multiply the intensity by a constant factor (stays within the kind).
    pub fn scaled(&self, factor: f64) -> NoiseIntensity {
        match self {
            NoiseIntensity::Additive { sigma } => NoiseIntensity::Additive {
                sigma: sigma * factor,
            },
            NoiseIntensity::LinearMultiplicative { sigma } => {
                NoiseIntensity::LinearMultiplicative {
                    sigma: sigma * factor,
                }
            }
            NoiseIntensity::PolynomialIntensity { poly } => NoiseIntensity::PolynomialIntensity {
                poly: poly.scale(factor),
            },
        }
    }

    /// Ensures sigma(x) != 0 on the interval, sampling densely plus both
    /// endpoints. Polynomial intensities of degree d are also checked for
    /// sign changes, which a pure sample scan could miss only below the scan
    /// resolution.
    pub fn check_nonvanishing(&self, domain: &Interval) -> Result<()> {
        const SCAN: usize = 2048;
        let mut prev = self.eval(domain.lo);
        if prev == 0.0 {
            return Err(Error::VanishingIntensity { x: domain.lo });
        }
        for i in 1..=SCAN {
            let x = domain.lo + domain.width() * i as f64 / SCAN as f64;
            let v = self.eval(x);
            if v == 0.0 || v.signum() != prev.signum() {
                return Err(Error::VanishingIntensity { x });
            }
            prev = v;
        }
        Ok(())
    }
}

/// The uncontrolled problem definition: potential V, noise intensity
/// sigma(x), OU correlation time, and the finite computation domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarModel {
    pub potential: Polynomial,
    pub intensity: NoiseIntensity,
    pub s_cor: f64,
    pub domain: Interval,
}

impl ScalarModel {
    /// Full validation: s_cor > 0, finite domain, non-vanishing intensity.
    pub fn new(
        potential: Polynomial,
        intensity: NoiseIntensity,
        s_cor: f64,
        domain: Interval,
    ) -> Result<Self> {
        if !(s_cor.is_finite() && s_cor > 0.0) {
            return Err(Error::invalid(
                "correlation time",
                format!("s_cor = {s_cor} must be > 0"),
            ));
        }
        intensity.check_nonvanishing(&domain)?;
        Ok(ScalarModel {
            potential,
            intensity,
            s_cor,
            domain,
        })
    }

    /// Like [`ScalarModel::new`] but permits an intensity that vanishes on
    /// the domain. Only the Monte Carlo engine accepts such models; every
    /// analytic solver re-checks and rejects them, since the stationary
    /// density divides by sigma(x).
    pub fn new_allowing_vanishing_intensity(
        potential: Polynomial,
        intensity: NoiseIntensity,
        s_cor: f64,
        domain: Interval,
    ) -> Result<Self> {
        if !(s_cor.is_finite() && s_cor > 0.0) {
            return Err(Error::invalid(
                "correlation time",
                format!("s_cor = {s_cor} must be > 0"),
            ));
        }
        Ok(ScalarModel {
            potential,
            intensity,
            s_cor,
            domain,
        })
    }

    pub fn zeta(&self, x: f64) -> Result<f64> {
        zeta(&self.potential, &self.intensity, &self.domain, x)
    }

    /// Identity transform into an [`EffectiveSystem`] (no control).
    pub fn as_effective(&self) -> EffectiveSystem {
        EffectiveSystem {
            eff_potential: self.potential.clone(),
            eff_intensity: self.intensity.clone(),
            eff_scor: self.s_cor,
            time_scale: 1.0,
            domain: self.domain,
        }
    }
}

/// Feedback controller knobs: gain `a`, delay `tau`, shift `xhat`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    pub gain: f64,
    pub delay: f64,
    pub shift: f64,
}

impl ControlParams {
    pub fn new(gain: f64, delay: f64, shift: f64) -> Result<Self> {
        if !(gain.is_finite() && gain >= 0.0) {
            return Err(Error::invalid("control gain", format!("a = {gain}")));
        }
        if !(delay.is_finite() && delay >= 0.0) {
            return Err(Error::invalid("control delay", format!("tau = {delay}")));
        }
        if !shift.is_finite() {
            return Err(Error::invalid("control shift", format!("xhat = {shift}")));
        }
        let ctrl = ControlParams {
            gain,
            delay,
            shift,
        };
        ctrl.check_gain_delay()?;
        Ok(ctrl)
    }

    pub fn uncontrolled() -> Self {
        ControlParams {
            gain: 0.0,
            delay: 0.0,
            shift: 0.0,
        }
    }

    /// The rescaling s = t/(1 - a*tau) is only well posed for a*tau < 1.
    pub fn check_gain_delay(&self) -> Result<()> {
        let product = self.gain * self.delay;
        if product >= 1.0 {
            return Err(Error::GainDelayProduct {
                a: self.gain,
                tau: self.delay,
                product,
            });
        }
        Ok(())
    }
}

/// The rescaled problem fed to the Fokker-Planck solver: effective potential
/// with the control well, intensity scaled by 1/sqrt(1 - a*tau), and
/// correlation time scaled by 1/(1 - a*tau).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveSystem {
    pub eff_potential: Polynomial,
    pub eff_intensity: NoiseIntensity,
    pub eff_scor: f64,
    /// 1 - a*tau
    pub time_scale: f64,
    pub domain: Interval,
}

impl EffectiveSystem {
    pub fn zeta(&self, x: f64) -> Result<f64> {
        zeta(
            &self.eff_potential,
            &self.eff_intensity,
            &self.domain,
            x,
        )
    }
}

/// Builds the effective system of the rescaled approximating SDE:
/// `Vtilde = V + (a/2)(x - xhat)^2`, `sigma_tilde = sigma / sqrt(1 - a*tau)`,
/// `s_cor_tilde = s_cor / (1 - a*tau)`.
pub fn make_effective(model: &ScalarModel, ctrl: &ControlParams) -> Result<EffectiveSystem> {
    ctrl.check_gain_delay()?;
    let scale = 1.0 - ctrl.gain * ctrl.delay;
    Ok(EffectiveSystem {
        eff_potential: model.potential.add_quadratic_well(ctrl.gain, ctrl.shift),
        eff_intensity: model.intensity.scaled(1.0 / scale.sqrt()),
        eff_scor: model.s_cor / scale,
        time_scale: scale,
        domain: model.domain,
    })
}

/// zeta(x) = -sigma(x) d/dx [ V'(x) / sigma(x) ], evaluated from exact
/// polynomial derivatives. For additive intensity this reduces to -V''(x).
pub fn zeta(
    potential: &Polynomial,
    intensity: &NoiseIntensity,
    domain: &Interval,
    x: f64,
) -> Result<f64> {
    if !domain.contains(x) {
        return Err(Error::OutsideDomain {
            x,
            lo: domain.lo,
            hi: domain.hi,
        });
    }
    let sigma = intensity.eval(x);
    if sigma == 0.0 {
        return Err(Error::VanishingIntensity { x });
    }
    let vpp = potential.second_derivative().eval(x);
    match intensity {
        NoiseIntensity::Additive { .. } => Ok(-vpp),
        _ => {
            let vp = potential.derivative().eval(x);
            let sp = intensity.eval_derivative(x);
            // -(sigma V'' - V' sigma') / sigma
            Ok(-vpp + vp * sp / sigma)
        }
    }
}

/// d zeta / dx, exact up to the polynomial arithmetic.
pub fn zeta_derivative(
    potential: &Polynomial,
    intensity: &NoiseIntensity,
    domain: &Interval,
    x: f64,
) -> Result<f64> {
    if !domain.contains(x) {
        return Err(Error::OutsideDomain {
            x,
            lo: domain.lo,
            hi: domain.hi,
        });
    }
    let sigma = intensity.eval(x);
    if sigma == 0.0 {
        return Err(Error::VanishingIntensity { x });
    }
    let vppp = potential.second_derivative().derivative().eval(x);
    match intensity {
        NoiseIntensity::Additive { .. } => Ok(-vppp),
        _ => {
            let vp = potential.derivative().eval(x);
            let vpp = potential.second_derivative().eval(x);
            let sp = intensity.eval_derivative(x);
            let spp = match intensity {
                NoiseIntensity::Additive { .. } => 0.0,
                NoiseIntensity::LinearMultiplicative { .. } => 0.0,
                NoiseIntensity::PolynomialIntensity { poly } => {
                    poly.second_derivative().eval(x)
                }
            };
            // d/dx [ V' sigma' / sigma ] = (V'' sigma' + V' sigma'') / sigma
            //                              - V' sigma'^2 / sigma^2
            Ok(-vppp + (vpp * sp + vp * spp) / sigma - vp * sp * sp / (sigma * sigma))
        }
    }
}

/// Lyapunov relaxation time eta = 1/V''(x_eq) at a stable equilibrium.
pub fn lyapunov_time(model: &ScalarModel, x_eq: f64) -> Result<f64> {
    let vpp = model.potential.second_derivative().eval(x_eq);
    if vpp <= 0.0 {
        return Err(Error::NotStableEquilibrium {
            x: x_eq,
            second_derivative: vpp,
        });
    }
    Ok(1.0 / vpp)
}

/// Soft diagnostics: the small-delay and colored-noise approximations are
/// derived for time scales below the Lyapunov time, but may hold beyond it,
/// so these conditions warn instead of erroring.
pub fn timescale_warnings(model: &ScalarModel, ctrl: &ControlParams, x_eq: f64) -> Vec<String> {
    let mut warnings = Vec::new();
    if let Ok(eta) = lyapunov_time(model, x_eq) {
        if ctrl.delay >= eta {
            warnings.push(format!(
                "delay tau = {} is not below the Lyapunov time eta = {eta}; \
                 the small-delay approximation may degrade",
                ctrl.delay
            ));
        }
        if model.s_cor > eta {
            warnings.push(format!(
                "correlation time s_cor = {} exceeds the Lyapunov time eta = {eta}",
                model.s_cor
            ));
        }
    }
    warnings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::presets;
    use proptest::prelude::*;

    fn bistable() -> ScalarModel {
        presets::bistable().model
    }

    fn laser() -> ScalarModel {
        presets::laser().model
    }

    #[test]
    fn effective_params_match_benchmark_pairs() {
        // benchmark (sigma_tilde, scor_tilde) pairs, checked to the same
        // precision they are usually quoted at
        let b = bistable();
        let ctrl = ControlParams::new(1.0, 0.1, 1.0).unwrap();
        let eff = make_effective(&b, &ctrl).unwrap();
        let sigma_tilde = match eff.eff_intensity {
            NoiseIntensity::Additive { sigma } => sigma,
            _ => panic!(),
        };
        assert!((sigma_tilde - 1.26).abs() < 0.005);
        assert!((eff.eff_scor - 0.28).abs() < 0.005);
        assert_eq!(eff.time_scale, 1.0 - 0.1);

        let l = laser();
        let ctrl = ControlParams::new(4.0, 0.02, 42.0).unwrap();
        let eff = make_effective(&l, &ctrl).unwrap();
        let sigma_tilde = match eff.eff_intensity {
            NoiseIntensity::LinearMultiplicative { sigma } => sigma,
            _ => panic!(),
        };
        assert!((sigma_tilde - 2.09).abs() < 0.005);
        assert!((eff.eff_scor - 0.022).abs() < 0.0005);
    }

    #[test]
    fn zero_gain_is_an_identity_transform() {
        let b = bistable();
        let ctrl = ControlParams::new(0.0, 0.3, -7.7).unwrap();
        let eff = make_effective(&b, &ctrl).unwrap();
        assert_eq!(eff.eff_potential, b.potential);
        assert_eq!(eff.eff_intensity, b.intensity);
        assert_eq!(eff.eff_scor, b.s_cor);
        assert_eq!(eff.time_scale, 1.0);
    }

    #[test]
    fn rejects_gain_delay_product_at_or_above_one() {
        let err = ControlParams::new(4.0, 0.25, 0.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("a*tau = 1"), "got: {msg}");
        assert!(ControlParams::new(4.0, 0.3, 0.0).is_err());
        assert!(ControlParams::new(4.0, 0.24, 0.0).is_ok());
    }

    #[test]
    fn zeta_additive_is_minus_second_derivative() {
        let b = bistable();
        assert_eq!(zeta(&b.potential, &b.intensity, &b.domain, 0.0).unwrap(), 1.0);
        assert_eq!(
            zeta(&b.potential, &b.intensity, &b.domain, 1.0).unwrap(),
            -2.0
        );
    }

    #[test]
    fn zeta_multiplicative_matches_finite_difference() {
        // zeta = -sigma (V'/sigma)' checked against a central difference of
        // V'/sigma with step 1e-6
        let l = laser();
        let x = 42.0;
        let h = 1e-6;
        let vp = l.potential.derivative();
        let ratio = |x: f64| vp.eval(x) / l.intensity.eval(x);
        let fd = -(l.intensity.eval(x)) * (ratio(x + h) - ratio(x - h)) / (2.0 * h);
        let exact = zeta(&l.potential, &l.intensity, &l.domain, x).unwrap();
        assert!(
            (fd - exact).abs() < 1e-4 * exact.abs(),
            "fd = {fd}, exact = {exact}"
        );
        // and equals -V'' + V'/x for sigma(x) = sigma x
        let alt = -l.potential.second_derivative().eval(x) + vp.eval(x) / x;
        assert!((exact - alt).abs() < 1e-12);
    }

    #[test]
    fn zeta_rejects_domain_violation_and_vanishing_intensity() {
        let l = laser();
        assert!(matches!(
            zeta(&l.potential, &l.intensity, &l.domain, 200.0),
            Err(Error::OutsideDomain { .. })
        ));
        let bad = NoiseIntensity::LinearMultiplicative { sigma: 2.0 };
        let wide = Interval::new(-1.0, 1.0).unwrap();
        assert!(matches!(
            zeta(&l.potential, &bad, &wide, 0.0),
            Err(Error::VanishingIntensity { .. })
        ));
    }

    #[test]
    fn lyapunov_times() {
        let b = bistable();
        assert_eq!(lyapunov_time(&b, 1.0).unwrap(), 0.5);
        let quad = ScalarModel::new(
            Polynomial::new(vec![0.0, 0.0, 0.5]),
            NoiseIntensity::additive(1.0).unwrap(),
            0.1,
            Interval::new(-5.0, 5.0).unwrap(),
        )
        .unwrap();
        assert_eq!(lyapunov_time(&quad, 0.0).unwrap(), 1.0);
        let l = laser();
        // independent evaluation of V''(42) for the laser coefficients
        let vpp = 3.0 * 0.046 * 42.0 * 42.0 - 2.0 * 3.19 * 42.0 + 59.79;
        assert!((lyapunov_time(&l, 42.0).unwrap() - 1.0 / vpp).abs() < 1e-12);
        // the local maximum is rejected
        assert!(lyapunov_time(&b, 0.0).is_err());
    }

    #[test]
    fn timescale_warnings_fire_softly() {
        let b = bistable();
        let ctrl = ControlParams::new(1.0, 0.6, 1.0).unwrap();
        let w = timescale_warnings(&b, &ctrl, 1.0);
        assert_eq!(w.len(), 1);
        let ctrl = ControlParams::new(1.0, 0.1, 1.0).unwrap();
        assert!(timescale_warnings(&b, &ctrl, 1.0).is_empty());
    }

    #[test]
    fn nonvanishing_check_rejects_sign_changes() {
        let domain = Interval::new(-1.0, 1.0).unwrap();
        let even = NoiseIntensity::polynomial(Polynomial::new(vec![0.25, 0.0, 1.0]));
        assert!(even.check_nonvanishing(&domain).is_ok());
        let odd = NoiseIntensity::polynomial(Polynomial::new(vec![0.1, 1.0]));
        assert!(odd.check_nonvanishing(&domain).is_err());
        assert!(NoiseIntensity::additive(0.0)
            .unwrap()
            .check_nonvanishing(&domain)
            .is_err());
    }

    proptest! {
        // control with a > 0, tau > 0 strictly lengthens the correlation
        // time and intensifies the noise
        #[test]
        fn control_intensifies_noise(a in 0.01f64..3.0, tau in 0.01f64..0.3, xhat in -2.0f64..2.0) {
            prop_assume!(a * tau < 1.0);
            let b = bistable();
            let ctrl = ControlParams::new(a, tau, xhat).unwrap();
            let eff = make_effective(&b, &ctrl).unwrap();
            prop_assert!(eff.eff_scor > b.s_cor);
            let sigma_tilde = match eff.eff_intensity {
                NoiseIntensity::Additive { sigma } => sigma,
                _ => unreachable!(),
            };
            prop_assert!(sigma_tilde > 1.2);
        }

        // Vtilde'(x) = V'(x) + a(x - xhat) up to float associativity
        #[test]
        fn effective_gradient_adds_linear_restoring_force(
            a in 0.0f64..3.0,
            tau in 0.0f64..0.3,
            xhat in -2.0f64..2.0,
            x in -5.0f64..5.0,
        ) {
            prop_assume!(a * tau < 1.0);
            let b = bistable();
            let ctrl = ControlParams::new(a, tau, xhat).unwrap();
            let eff = make_effective(&b, &ctrl).unwrap();
            let lhs = eff.eff_potential.derivative().eval(x);
            let rhs = b.potential.derivative().eval(x) + a * (x - xhat);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }

        // zeta for additive intensity equals -V'' for random polynomials
        #[test]
        fn zeta_additive_property(
            coeffs in proptest::collection::vec(-2.0f64..2.0, 2..7),
            x in -3.0f64..3.0,
            sigma in 0.1f64..4.0,
        ) {
            let v = Polynomial::new(coeffs);
            let intensity = NoiseIntensity::additive(sigma).unwrap();
            let domain = Interval::new(-3.0, 3.0).unwrap();
            let z = zeta(&v, &intensity, &domain, x).unwrap();
            prop_assert_eq!(z, -v.second_derivative().eval(x));
        }
    }
}
