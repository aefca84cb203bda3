//! Parameter sets and the physical-to-normalized parameter map.
//!
//! All quantities downstream of [`ModelParams`] are dimensionless, with time
//! measured in units of the inverse signal decay rate. Quadrature vectors use
//! the fixed ordering `(x_m, p_m, x_p, p_p, x_s, p_s)` with optical
//! quadratures `x = a† + a`, `p = i(a† - a)`, so vacuum variances are 1.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boltzmann constant (J/K), CODATA 2018 exact.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Reduced Planck constant (J s), CODATA 2018 exact.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Below this occupation the high-temperature noise model is questionable.
pub const HIGH_TEMPERATURE_WARN: f64 = 10.0;

/// Dimensional parameters, all rates in 1/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    /// Down-conversion rate.
    pub chi: f64,
    /// Pump driving rate `E_L`.
    pub drive: f64,
    pub gamma_p: f64,
    pub gamma_s: f64,
    pub gamma_m: f64,
    pub omega_m: f64,
    pub delta_p: f64,
    pub delta_s: f64,
    /// Single-photon optomechanical rate.
    pub g_s: f64,
    /// Thermal phonon occupation of the mechanical bath.
    pub n_th: f64,
}

impl PhysicalParams {
    /// Thermal occupation `k_B T / (hbar Omega_m)` for a bath at `temperature` kelvin.
    pub fn n_th_from_temperature(temperature: f64, omega_m: f64) -> f64 {
        BOLTZMANN * temperature / (HBAR * omega_m)
    }

    /// Length of one dimensionless time unit in seconds (`1 / gamma_s`).
    pub fn time_unit(&self) -> f64 {
        1.0 / self.gamma_s
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("chi", self.chi),
            ("gamma_p", self.gamma_p),
            ("gamma_s", self.gamma_s),
            ("gamma_m", self.gamma_m),
            ("omega_m", self.omega_m),
            ("g_s", self.g_s),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be a positive rate, got {v}")));
            }
        }
        for (name, v) in [("delta_p", self.delta_p), ("delta_s", self.delta_s)] {
            if !v.is_finite() {
                return Err(Error::Validation(format!("{name} must be finite, got {v}")));
            }
        }
        if !(self.drive.is_finite() && self.drive >= 0.0) {
            return Err(Error::Validation(format!("drive must be non-negative, got {}", self.drive)));
        }
        if !(self.n_th.is_finite() && self.n_th >= 1.0) {
            return Err(Error::Validation(format!(
                "n_th must be >= 1 (high-temperature model), got {}",
                self.n_th
            )));
        }
        Ok(())
    }
}

/// Normalized model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Pump-to-signal decay ratio.
    pub kappa: f64,
    /// Mechanical-to-signal decay ratio.
    pub gamma: f64,
    /// Mechanical frequency in units of the signal decay rate.
    #[serde(rename = "Omega")]
    pub omega: f64,
    pub delta_p: f64,
    pub delta_s: f64,
    /// Optomechanical coupling relative to down-conversion.
    pub g: f64,
    /// Noise scale (single-photon down-conversion strength).
    pub g_dc: f64,
    pub n_th: f64,
    /// Normalized pump injection.
    pub sigma: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            gamma: 0.1,
            omega: 1.0,
            delta_p: 0.0,
            delta_s: 0.0,
            g: 0.0,
            g_dc: 1e-3,
            n_th: 100.0,
            sigma: 0.0,
        }
    }
}

/// Informational diagnostics from [`validate`]; never fatal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Warning {
    /// `n_th` below [`HIGH_TEMPERATURE_WARN`]; the momentum-only thermal noise model assumes `n_th >> 1`.
    HighTemperatureAssumption,
    /// `gamma >= Omega`, outside the resolved-sideband regime.
    UnresolvedSideband,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::HighTemperatureAssumption => {
                write!(f, "n_th < {HIGH_TEMPERATURE_WARN}: high-temperature noise model assumes n_th >> 1")
            }
            Warning::UnresolvedSideband => write!(f, "gamma >= Omega: resolved-sideband assumption violated"),
        }
    }
}

impl ModelParams {
    /// Checks the hard invariants; use [`validate`] for soft warnings.
    pub fn check(&self) -> Result<()> {
        let fields = [
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("Omega", self.omega),
            ("delta_p", self.delta_p),
            ("delta_s", self.delta_s),
            ("g", self.g),
            ("g_dc", self.g_dc),
            ("n_th", self.n_th),
            ("sigma", self.sigma),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::Validation(format!("{name} must be finite, got {v}")));
            }
        }
        for (name, v) in [("kappa", self.kappa), ("gamma", self.gamma), ("Omega", self.omega), ("g_dc", self.g_dc)] {
            if v <= 0.0 {
                return Err(Error::Validation(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.g < 0.0 {
            return Err(Error::Validation(format!("g must be >= 0, got {}", self.g)));
        }
        if self.sigma < 0.0 {
            return Err(Error::Validation(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.n_th < 0.0 {
            return Err(Error::Validation(format!("n_th must be >= 0, got {}", self.n_th)));
        }
        Ok(())
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_g(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    /// Parses a flat JSON object with the nine normalized keys.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let p: ModelParams = serde_json::from_str(s).map_err(|e| Error::Validation(e.to_string()))?;
        p.check()?;
        Ok(p)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Validation(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json_str(&text)
    }

    /// Reads a field by its JSON key. Returns `None` for unknown names.
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "kappa" => self.kappa,
            "gamma" => self.gamma,
            "Omega" => self.omega,
            "delta_p" => self.delta_p,
            "delta_s" => self.delta_s,
            "g" => self.g,
            "g_dc" => self.g_dc,
            "n_th" => self.n_th,
            "sigma" => self.sigma,
            _ => return None,
        })
    }

    /// Sets a field by its JSON key.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match name {
            "kappa" => &mut self.kappa,
            "gamma" => &mut self.gamma,
            "Omega" => &mut self.omega,
            "delta_p" => &mut self.delta_p,
            "delta_s" => &mut self.delta_s,
            "g" => &mut self.g,
            "g_dc" => &mut self.g_dc,
            "n_th" => &mut self.n_th,
            "sigma" => &mut self.sigma,
            _ => return Err(Error::Validation(format!("unknown parameter '{name}'"))),
        };
        *slot = value;
        Ok(())
    }

    pub const FIELD_NAMES: [&'static str; 9] =
        ["kappa", "gamma", "Omega", "delta_p", "delta_s", "g", "g_dc", "n_th", "sigma"];
}

/// Maps physical rates onto the normalized parameter set.
pub fn normalize(phys: &PhysicalParams) -> Result<ModelParams> {
    phys.validate()?;
    let g_dc = phys.chi / (phys.gamma_p * phys.gamma_s).sqrt();
    let omega = phys.omega_m / phys.gamma_s;
    let params = ModelParams {
        kappa: phys.gamma_p / phys.gamma_s,
        gamma: phys.gamma_m / phys.gamma_s,
        omega,
        delta_p: phys.delta_p / phys.gamma_p,
        delta_s: phys.delta_s / phys.gamma_s,
        g: (phys.g_s / phys.gamma_s) / (g_dc * omega.sqrt()),
        g_dc,
        n_th: phys.n_th,
        sigma: phys.chi * phys.drive / (phys.gamma_p * phys.gamma_s),
    };
    params.check()?;
    Ok(params)
}

/// Soft checks on the modelling assumptions.
pub fn validate(params: &ModelParams) -> Vec<Warning> {
    let mut out = Vec::new();
    if params.n_th < HIGH_TEMPERATURE_WARN {
        out.push(Warning::HighTemperatureAssumption);
    }
    if params.gamma >= params.omega {
        out.push(Warning::UnresolvedSideband);
    }
    out
}

/// Numerical thresholds shared by the analysis routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative threshold (times the spectral radius) for a real part to count as zero.
    pub eig_zero: f64,
    /// Bound on steady-state field-equation residuals.
    pub residual: f64,
    /// Bisection / root tolerance on `I_s`.
    pub root_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { eig_zero: 1e-9, residual: 1e-10, root_tol: 1e-12 }
    }
}

impl Tolerances {
    pub fn check(&self) -> Result<()> {
        if [self.eig_zero, self.residual, self.root_tol].iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Validation("tolerances must be strictly positive".into()))
        }
    }
}
