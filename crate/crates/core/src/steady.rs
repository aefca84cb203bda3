//! Classical fixed points of the mean-field equations.
//!
//! Nontrivial states are parameterized by the signal intensity `I_s`, from
//! which the injection follows uniquely through the quadratic
//! `sigma^2 = q0 + q1 I_s + q2 I_s^2`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{ModelParams, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Branch {
    Trivial,
    NontrivialUpper,
    NontrivialLower,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Trivial => "trivial",
            Branch::NontrivialUpper => "upper",
            Branch::NontrivialLower => "lower",
        }
    }
}

/// A classical stationary solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub x_bar: f64,
    pub p_bar: f64,
    pub beta_p: C64,
    pub beta_s: C64,
    pub i_p: f64,
    pub i_s: f64,
    pub phi_p: f64,
    pub phi_s: f64,
    /// Injection this state belongs to.
    pub sigma: f64,
    pub branch: Branch,
}

/// Coefficients of `sigma^2(I_s) = q0 + q1 I_s + q2 I_s^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCoeffs {
    pub q0: f64,
    pub q1: f64,
    pub q2: f64,
}

impl QuadraticCoeffs {
    pub fn sigma2(&self, i_s: f64) -> f64 {
        self.q0 + self.q1 * i_s + self.q2 * i_s * i_s
    }
}

pub fn q_coefficients(params: &ModelParams) -> QuadraticCoeffs {
    let (dp, ds, g2) = (params.delta_p, params.delta_s, params.g * params.g);
    let h = 0.5 - 2.0 * dp * g2;
    QuadraticCoeffs {
        q0: (1.0 + dp * dp) * (1.0 + ds * ds),
        q1: (1.0 - dp * ds) + 4.0 * ds * (1.0 + dp * dp) * g2,
        q2: 4.0 * g2 * g2 + h * h,
    }
}

fn phase(z: C64) -> f64 {
    if z.norm() == 0.0 {
        0.0
    } else {
        z.arg()
    }
}

fn wrap_pi(mut a: f64) -> f64 {
    while a <= -PI {
        a += 2.0 * PI;
    }
    while a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// The signal-off solution for the injection in `params`.
pub fn trivial_solution(params: &ModelParams) -> SteadyState {
    let beta_p = C64::new(params.sigma, 0.0) / C64::new(1.0, -params.delta_p);
    SteadyState {
        x_bar: 0.0,
        p_bar: 0.0,
        beta_p,
        beta_s: C64::new(0.0, 0.0),
        i_p: beta_p.norm_sqr(),
        i_s: 0.0,
        phi_p: phase(beta_p),
        phi_s: 0.0,
        sigma: params.sigma,
        branch: Branch::Trivial,
    }
}

/// Trivial solution at a prescribed pump intensity (`sigma` chosen to match).
pub fn trivial_at_pump_intensity(params: &ModelParams, i_p: f64) -> Result<SteadyState> {
    if !(i_p.is_finite() && i_p >= 0.0) {
        return Err(Error::Domain(format!("pump intensity must be >= 0, got {i_p}")));
    }
    let sigma = (i_p * (1.0 + params.delta_p * params.delta_p)).sqrt();
    Ok(trivial_solution(&params.with_sigma(sigma)))
}

/// Real roots of `q2 I^2 + q1 I + (q0 - sigma^2) = 0` in ascending order,
/// without sign filtering. A (numerically) double root is returned once.
pub fn intensity_roots(params: &ModelParams, sigma: f64, tol: &Tolerances) -> Vec<f64> {
    let q = q_coefficients(params);
    let c = q.q0 - sigma * sigma;
    let disc = q.q1 * q.q1 - 4.0 * q.q2 * c;
    let scale = (q.q1 * q.q1).max(4.0 * q.q2 * c.abs()).max(f64::MIN_POSITIVE);
    if disc.abs() <= tol.root_tol * scale {
        return vec![-q.q1 / (2.0 * q.q2)];
    }
    if disc < 0.0 {
        return Vec::new();
    }
    // cancellation-free form
    let s = disc.sqrt();
    let sgn = if q.q1 >= 0.0 { 1.0 } else { -1.0 };
    let t = -0.5 * (q.q1 + sgn * s);
    let r1 = t / q.q2;
    let r2 = c / t;
    let mut roots = vec![r1, r2];
    roots.sort_by(f64::total_cmp);
    roots
}

/// Nontrivial signal intensities compatible with injection `sigma`.
pub fn nontrivial_intensities(params: &ModelParams, sigma: f64, tol: &Tolerances) -> Vec<(f64, Branch)> {
    let roots: Vec<f64> =
        intensity_roots(params, sigma, tol).into_iter().filter(|&r| r >= tol.root_tol).collect();
    match roots.as_slice() {
        [lo, hi] => vec![(*lo, Branch::NontrivialLower), (*hi, Branch::NontrivialUpper)],
        [one] => vec![(*one, Branch::NontrivialUpper)],
        _ => Vec::new(),
    }
}

/// Injection that sustains signal intensity `i_s` on the nontrivial branch.
pub fn sigma_from_intensity(params: &ModelParams, i_s: f64) -> Result<f64> {
    if !(i_s.is_finite() && i_s >= 0.0) {
        return Err(Error::Domain(format!("signal intensity must be >= 0, got {i_s}")));
    }
    let s2 = q_coefficients(params).sigma2(i_s);
    // q0 > 0 and sigma^2 is a squared modulus; a negative value means broken coefficients
    assert!(s2 >= 0.0, "sigma^2(I_s) = {s2} < 0");
    Ok(s2.sqrt())
}

/// Builds the nontrivial state with intensity `i_s`; `sign = -1` selects the
/// Z2 partner with `beta_s -> -beta_s`.
pub fn reconstruct_amplitudes(params: &ModelParams, i_s: f64, sign: i32) -> Result<SteadyState> {
    if !(i_s.is_finite() && i_s > 0.0) {
        return Err(Error::Domain(format!("nontrivial state needs I_s > 0, got {i_s}")));
    }
    if sign != 1 && sign != -1 {
        return Err(Error::Domain(format!("sign must be +1 or -1, got {sign}")));
    }
    let (dp, ds, g) = (params.delta_p, params.delta_s, params.g);
    let detuned = C64::new(1.0, -(ds + 2.0 * g * g * i_s));
    let z = C64::new(1.0, -dp) * detuned + i_s / 2.0;
    let sigma = z.norm();
    if sigma == 0.0 {
        return Err(Error::Domain(format!("I_s = {i_s} requires zero injection")));
    }
    // principal value in (-pi/2, pi/2] for sign = +1
    let mut phi_s = -z.arg() / 2.0;
    if phi_s <= -FRAC_PI_2 {
        phi_s += PI;
    }
    if sign < 0 {
        phi_s = wrap_pi(phi_s - PI);
    }
    let beta_s = C64::from_polar(i_s.sqrt(), phi_s);
    let beta_p = detuned * C64::from_polar(1.0, 2.0 * phi_s);
    let q = q_coefficients(params);
    let tp = if q.q1 < 0.0 { Some(-q.q1 / (2.0 * q.q2)) } else { None };
    let branch = match tp {
        Some(i_tp) if i_s < i_tp => Branch::NontrivialLower,
        _ => Branch::NontrivialUpper,
    };
    Ok(SteadyState {
        x_bar: 2.0 * g * i_s,
        p_bar: 0.0,
        beta_p,
        beta_s,
        i_p: beta_p.norm_sqr(),
        i_s,
        phi_p: phase(beta_p),
        phi_s,
        sigma,
        branch,
    })
}

/// All stationary states at the injection `params.sigma` (trivial first, then
/// the nontrivial ones in ascending `I_s`, `sign = +1` representatives).
pub fn steady_states(params: &ModelParams, tol: &Tolerances) -> Result<Vec<SteadyState>> {
    let mut out = vec![trivial_solution(params)];
    for (i_s, branch) in nontrivial_intensities(params, params.sigma, tol) {
        let mut ss = reconstruct_amplitudes(params, i_s, 1)?;
        ss.branch = branch;
        out.push(ss);
    }
    Ok(out)
}

/// Field-equation residuals `(pump, signal)`, each scaled by the largest term.
pub fn residuals(params: &ModelParams, ss: &SteadyState) -> (f64, f64) {
    let lin_p = C64::new(1.0, -params.delta_p) * ss.beta_p;
    let sq = ss.beta_s * ss.beta_s / 2.0;
    let r_p = C64::new(ss.sigma, 0.0) - lin_p - sq;
    let scale_p = ss.sigma.max(lin_p.norm()).max(sq.norm()).max(1.0);

    let lhs = ss.beta_p * ss.beta_s.conj();
    let rhs = C64::new(1.0, -(params.delta_s + 2.0 * params.g * params.g * ss.i_s)) * ss.beta_s;
    let r_s = lhs - rhs;
    let scale_s = lhs.norm().max(rhs.norm()).max(1.0);
    (r_p.norm() / scale_p, r_s.norm() / scale_s)
}

/// Signal intensity at the fold of the nontrivial branch, if it exists.
pub fn turning_point(params: &ModelParams) -> Option<f64> {
    let q = q_coefficients(params);
    (q.q1 < 0.0).then(|| -q.q1 / (2.0 * q.q2))
}

/// Injection window `(sigma2_low, sigma2_high]` with two nontrivial solutions.
pub fn bistability_window(params: &ModelParams) -> Option<(f64, f64)> {
    let q = q_coefficients(params);
    turning_point(params).map(|_| (q.q0 - q.q1 * q.q1 / (4.0 * q.q2), q.q0))
}

/// Trivial-solution instability: `(I_p threshold, sigma^2 threshold)`.
pub fn pitchfork_threshold(params: &ModelParams) -> (f64, f64) {
    let i_p = 1.0 + params.delta_s * params.delta_s;
    (i_p, i_p * (1.0 + params.delta_p * params.delta_p))
}
