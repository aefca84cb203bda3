//! Single driven optical mode coupled to the mechanics: the standard
//! sideband-cooling configuration, used as a reference for the DOMPO.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fluctuations::{
    mechanical_state, noise_model_single_mode, quadrature_map_single_mode, system_mechanical_state, CovarianceMatrix,
    LinearizedSystem, MechanicalState,
};
use crate::scan::{cell_params, map_cells, Axis, MapCell, System};
use crate::params::{ModelParams, Tolerances};
use crate::stability::{StabilityMatrix, StabilityReport};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidebandSteadyState {
    pub x_bar: f64,
    pub beta_s: C64,
    /// Real drive amplitude.
    pub e: f64,
    pub i_s: f64,
}

/// Stationary state at intracavity intensity `i_s`; the drive follows.
pub fn sideband_steady_state(params: &ModelParams, i_s: f64) -> Result<SidebandSteadyState> {
    if !(i_s.is_finite() && i_s >= 0.0) {
        return Err(Error::Domain(format!("I_s must be >= 0, got {i_s}")));
    }
    let x_bar = 2.0 * params.g * i_s;
    let d_eff = params.delta_s + params.g * x_bar;
    let e = (i_s * (1.0 + d_eff * d_eff)).sqrt();
    let beta_s = C64::new(e, 0.0) / C64::new(1.0, -d_eff);
    Ok(SidebandSteadyState { x_bar, beta_s, e, i_s })
}

/// Residual of the optical drift equation, relative to the drive (floor 1).
pub fn sideband_residual(params: &ModelParams, ss: &SidebandSteadyState) -> f64 {
    let lhs = C64::new(1.0, -(params.delta_s + params.g * ss.x_bar)) * ss.beta_s;
    (lhs - ss.e).norm() / ss.e.max(1.0)
}

/// 4x4 stability matrix in the basis `(x, p, b_s, b_s*)`.
pub fn sideband_matrix(params: &ModelParams, ss: &SidebandSteadyState) -> StabilityMatrix {
    let g = params.g;
    let bs = ss.beta_s;
    let z = C64::new(0.0, 0.0);
    let r = |v: f64| C64::new(v, 0.0);
    let i = C64::new(0.0, 1.0);
    let d = params.delta_s + g * ss.x_bar;
    let rows: [[C64; 4]; 4] = [
        [z, r(params.omega * params.omega), z, z],
        [r(-1.0), r(-params.gamma), 2.0 * g * bs.conj(), 2.0 * g * bs],
        [i * g * bs, z, -C64::new(1.0, -d), z],
        [-i * g * bs.conj(), z, z, -C64::new(1.0, d)],
    ];
    StabilityMatrix { entries: DMatrix::from_fn(4, 4, |a, b| rows[a][b]), n_real: 2 }
}

pub fn sideband_stability(params: &ModelParams, ss: &SidebandSteadyState, tol: &Tolerances) -> Result<StabilityReport> {
    StabilityReport::from_matrix(&sideband_matrix(params, ss), tol)
}

pub fn sideband_system(params: &ModelParams, ss: &SidebandSteadyState, tol: &Tolerances) -> Result<LinearizedSystem> {
    LinearizedSystem::new(
        sideband_matrix(params, ss),
        noise_model_single_mode(params),
        quadrature_map_single_mode(params),
        params.g_dc,
        tol,
    )
}

/// Stationary covariance `(x_m, p_m, x_s, p_s)` from the Lyapunov equation.
pub fn sideband_covariance(params: &ModelParams, i_s: f64, tol: &Tolerances) -> Result<CovarianceMatrix> {
    let ss = sideband_steady_state(params, i_s)?;
    sideband_system(params, &ss, tol)?.lyapunov()
}

pub fn sideband_mechanical_state(params: &ModelParams, i_s: f64, tol: &Tolerances) -> Result<MechanicalState> {
    mechanical_state(&sideband_covariance(params, i_s, tol)?.mechanical_block())
}

/// Sideband-cooling counterpart of the DOMPO effective map.
pub fn sideband_map(params_base: &ModelParams, axis1: &Axis, axis2: &Axis, tol: &Tolerances) -> Result<Vec<MapCell>> {
    map_cells(axis1, axis2, |a, b| {
        let (p, i_s) = cell_params(params_base, axis1, a, axis2, b)?;
        let ss = sideband_steady_state(&p, i_s.expect("map_cells guarantees an intensity axis"))?;
        let sys = sideband_system(&p, &ss, tol)?;
        let stable = sys.report.is_stable();
        let state = if stable { system_mechanical_state(&sys, tol).ok() } else { None };
        Ok(MapCell {
            param1: a,
            param2: b,
            sigma: Some(ss.e),
            branch: None,
            stable,
            instability: (!stable).then_some(sys.report.classification),
            state,
            margin: Some(sys.report.margin),
            system: System::Sideband,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast_pump_detuned(delta_s: f64) -> ModelParams {
        ModelParams { kappa: 100.0, gamma: 0.005, omega: 10.0, delta_p: 5.0, delta_s, g: 0.1, n_th: 100.0, ..Default::default() }
    }

    #[test]
    fn steady_examples() {
        let p = fast_pump_detuned(-10.0);
        let s = sideband_steady_state(&p, 0.0).unwrap();
        assert_eq!((s.x_bar, s.e, s.beta_s), (0.0, 0.0, C64::new(0.0, 0.0)));

        let p0 = ModelParams { g: 0.0, delta_s: 0.0, ..p };
        let s = sideband_steady_state(&p0, 4.0).unwrap();
        assert_eq!(s.e, 2.0);
        assert!((s.beta_s - C64::new(2.0, 0.0)).norm() < 1e-15);

        let s = sideband_steady_state(&p, 50.0).unwrap();
        assert!((s.e - (50.0f64 * 82.0).sqrt()).abs() < 1e-12);
        assert!((s.beta_s.norm_sqr() - 50.0).abs() < 1e-10);
        assert!(sideband_residual(&p, &s) < 1e-10);
        assert!(sideband_steady_state(&p, -1.0).is_err());
    }

    #[test]
    fn undriven_spectrum() {
        let p = fast_pump_detuned(-3.0);
        let s = sideband_steady_state(&p, 0.0).unwrap();
        let rep = sideband_stability(&p, &s, &Tolerances::default()).unwrap();
        for t in [C64::new(-1.0, 3.0), C64::new(-1.0, -3.0)] {
            assert!(rep.eigenvalues.iter().any(|e| (e - t).norm() < 1e-10));
        }
        assert!(rep.is_stable());
        assert!(sideband_matrix(&p, &s).is_conjugation_symmetric(1e-15));
    }

    #[test]
    fn red_sideband_cools() {
        let tol = Tolerances::default();
        let p = fast_pump_detuned(-10.0);
        let s = sideband_steady_state(&p, 20.0).unwrap();
        assert!(sideband_stability(&p, &s, &tol).unwrap().is_stable());
        let red = sideband_mechanical_state(&p, 20.0, &tol).unwrap();
        assert!(red.n_eff < 10.0, "{red:?}");
        let q = ModelParams { delta_s: 10.0, ..p };
        // the blue side is only stable at weak drive
        let blue = sideband_mechanical_state(&q, 0.01, &tol).unwrap();
        let red_same = sideband_mechanical_state(&p, 0.01, &tol).unwrap();
        assert!(blue.n_eff > red_same.n_eff);
        assert!(sideband_mechanical_state(&q, 0.1, &tol).is_err());
    }

    #[test]
    fn decoupled_limit_is_thermal() {
        let p = ModelParams { g: 0.0, ..fast_pump_detuned(-10.0) };
        let m = sideband_mechanical_state(&p, 20.0, &Tolerances::default()).unwrap();
        assert!((m.n_eff - 99.5).abs() < 1e-9 && m.r_eff.abs() < 1e-12);
    }

    #[test]
    fn spectral_matches_lyapunov() {
        let tol = Tolerances::default();
        let p = fast_pump_detuned(-10.0);
        let s = sideband_steady_state(&p, 20.0).unwrap();
        let sys = sideband_system(&p, &s, &tol).unwrap();
        let a = sys.spectral(&tol).unwrap();
        let b = sys.lyapunov().unwrap();
        assert!(a.relative_difference(&b) < 1e-8);
        let q = ModelParams { g_dc: 0.3, ..p };
        let c = sideband_covariance(&q, 20.0, &tol).unwrap();
        assert!(c.relative_difference(&b) < 1e-9);
    }
}
