//! Model/control definitions as TOML documents, plus the two bundled
//! presets ("bistable" and "laser").

use crate::error::{Error, Result};
use crate::model::{ControlParams, Interval, NoiseIntensity, ScalarModel};
use crate::poly::Polynomial;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub potential: PotentialSection,
    pub noise: NoiseSection,
    pub domain: DomainSection,
    #[serde(default)]
    pub control: ControlSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialSection {
    /// Coefficients ordered lowest degree first.
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSection {
    /// "additive" | "linear-multiplicative" | "polynomial"
    pub kind: String,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub coeffs: Option<Vec<f64>>,
    pub s_cor: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSection {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlSection {
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub tau: f64,
    #[serde(default)]
    pub xhat: f64,
}

impl Default for ControlSection {
    fn default() -> Self {
        ControlSection {
            a: 0.0,
            tau: 0.0,
            xhat: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            why: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("model config serializes")
    }

    fn intensity(&self) -> Result<NoiseIntensity> {
        let need_sigma = || {
            self.noise.sigma.ok_or_else(|| {
                Error::invalid("noise", format!("kind '{}' requires noise.sigma", self.noise.kind))
            })
        };
        match self.noise.kind.as_str() {
            "additive" => NoiseIntensity::additive(need_sigma()?),
            "linear-multiplicative" => NoiseIntensity::linear_multiplicative(need_sigma()?),
            "polynomial" => {
                let coeffs = self.noise.coeffs.clone().ok_or_else(|| {
                    Error::invalid("noise", "kind 'polynomial' requires noise.coeffs")
                })?;
                Ok(NoiseIntensity::polynomial(Polynomial::new(coeffs)))
            }
            other => Err(Error::invalid(
                "noise",
                format!("unknown noise.kind '{other}'"),
            )),
        }
    }

    /// Builds the validated model and control pair.
    pub fn build(&self) -> Result<(ScalarModel, ControlParams)> {
        let model = ScalarModel::new(
            Polynomial::new(self.potential.coeffs.clone()),
            self.intensity()?,
            self.noise.s_cor,
            Interval::new(self.domain.lo, self.domain.hi)?,
        )?;
        let ctrl = ControlParams::new(self.control.a, self.control.tau, self.control.xhat)?;
        Ok((model, ctrl))
    }

    /// Builds without the non-vanishing intensity check; for simulation-only
    /// use such as degenerate sigma = 0 runs.
    pub fn build_for_simulation(&self) -> Result<(ScalarModel, ControlParams)> {
        let model = ScalarModel::new_allowing_vanishing_intensity(
            Polynomial::new(self.potential.coeffs.clone()),
            self.intensity()?,
            self.noise.s_cor,
            Interval::new(self.domain.lo, self.domain.hi)?,
        )?;
        let ctrl = ControlParams::new(self.control.a, self.control.tau, self.control.xhat)?;
        Ok((model, ctrl))
    }

    pub fn from_parts(model: &ScalarModel, ctrl: &ControlParams) -> Self {
        let (kind, sigma, coeffs) = match &model.intensity {
            NoiseIntensity::Additive { sigma } => ("additive", Some(*sigma), None),
            NoiseIntensity::LinearMultiplicative { sigma } => {
                ("linear-multiplicative", Some(*sigma), None)
            }
            NoiseIntensity::PolynomialIntensity { poly } => {
                ("polynomial", None, Some(poly.coeffs().to_vec()))
            }
        };
        ModelConfig {
            potential: PotentialSection {
                coeffs: model.potential.coeffs().to_vec(),
            },
            noise: NoiseSection {
                kind: kind.to_string(),
                sigma,
                coeffs,
                s_cor: model.s_cor,
            },
            domain: DomainSection {
                lo: model.domain.lo,
                hi: model.domain.hi,
            },
            control: ControlSection {
                a: ctrl.gain,
                tau: ctrl.delay,
                xhat: ctrl.shift,
            },
        }
    }
}

/// A bundled preset: the model, an uncontrolled default control block, the
/// desirable equilibrium, and Monte Carlo stepping defaults sized to the
/// model's relaxation rate.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub model: ScalarModel,
    pub x_a: f64,
    pub mc_dt: f64,
    pub mc_t_end: f64,
    pub mc_burn_in: f64,
}

pub mod presets {
    use super::*;

    /// Symmetric double well V = x^4/4 - x^2/2 with additive noise;
    /// defaults sigma = 1.2, s_cor = 0.25 on [-5, 5].
    pub fn bistable() -> Preset {
        Preset {
            name: "bistable",
            model: ScalarModel::new(
                Polynomial::new(vec![0.0, 0.0, -0.5, 0.0, 0.25]),
                NoiseIntensity::additive(1.2).unwrap(),
                0.25,
                Interval::new(-5.0, 5.0).unwrap(),
            )
            .unwrap(),
            x_a: 1.0,
            mc_dt: 1e-3,
            mc_t_end: 200.0,
            mc_burn_in: 100.0,
        }
    }

    /// Intracavity light intensity model with linear multiplicative noise;
    /// V = (c3/4)x^4 - (c2/3)x^3 + (c1/2)x^2 - Y x with Y = 292,
    /// c1 = 59.79, c2 = 3.19, c3 = 0.046; defaults sigma = 2, s_cor = 0.02
    /// on [0.5, 90] (strictly positive so sigma(x) = sigma*x stays nonzero).
    pub fn laser() -> Preset {
        let (y, c1, c2, c3) = (292.0, 59.79, 3.19, 0.046);
        Preset {
            name: "laser",
            model: ScalarModel::new(
                Polynomial::new(vec![0.0, -y, c1 / 2.0, -c2 / 3.0, c3 / 4.0]),
                NoiseIntensity::linear_multiplicative(2.0).unwrap(),
                0.02,
                Interval::new(0.5, 90.0).unwrap(),
            )
            .unwrap(),
            x_a: 42.0,
            mc_dt: 2e-4,
            mc_t_end: 5.0,
            mc_burn_in: 2.5,
        }
    }

    pub fn by_name(name: &str) -> Option<Preset> {
        match name {
            "bistable" => Some(bistable()),
            "laser" => Some(laser()),
            _ => None,
        }
    }
}
