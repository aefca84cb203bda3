//! Gaussian fluctuations around a stable fixed point.
//!
//! Fluctuations `(x, p, b_p, b_p^+, b_s, b_s^+)` obey a linear Langevin
//! system driven by white noise with diffusion `D_b`. The stationary
//! covariance of the physical quadratures `(x_m, p_m, x_p, p_p, x_s, p_s)`
//! is obtained three ways: from the left-eigenvector (spectral) formula, from
//! the continuous Lyapunov equation, and by Monte Carlo integration.

use nalgebra::{DMatrix, Matrix2, SMatrix, SVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{left_eigenvectors, psd_sqrt, real_part_checked, solve_lyapunov, spectral_radius, to_complex};
use crate::params::{ModelParams, Tolerances};
use crate::stability::{build_stability_matrix, StabilityMatrix, StabilityReport};
use crate::scan::{cell_params, map_cells, Axis, MapCell, System};
use crate::steady::{reconstruct_amplitudes, trivial_solution, SteadyState};

/// Symmetrization factor of the spectral covariance formula.
pub const COVARIANCE_FACTOR: f64 = 0.5;

/// Noise bookkeeping of the linearized Langevin equations.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    /// Block matrix of noise correlations in the `(b, b^+)` basis.
    pub m: DMatrix<f64>,
    /// `g_DC^2 (M + M^T)`.
    pub d_b: DMatrix<f64>,
    /// Diffusion in the physical quadrature basis.
    pub d_r: DMatrix<f64>,
}

/// Map from the `(b, b^+)` fluctuation basis to physical quadratures.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureMap {
    pub r: DMatrix<C64>,
}

impl QuadratureMap {
    pub fn inverse(&self) -> DMatrix<C64> {
        self.r.clone().try_inverse().expect("quadrature map is invertible")
    }
}

/// Mechanical noise block `diag(0, 2 gamma n_th / Omega)`.
fn mech_noise(params: &ModelParams) -> [[f64; 2]; 2] {
    [[0.0, 0.0], [0.0, 2.0 * params.gamma * params.n_th / params.omega]]
}

fn block_diag_real(blocks: &[[[f64; 2]; 2]]) -> DMatrix<f64> {
    let n = 2 * blocks.len();
    let mut m = DMatrix::zeros(n, n);
    for (k, b) in blocks.iter().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                m[(2 * k + i, 2 * k + j)] = b[i][j];
            }
        }
    }
    m
}

fn block_diag_complex(blocks: &[[[C64; 2]; 2]]) -> DMatrix<C64> {
    let n = 2 * blocks.len();
    let mut m = DMatrix::zeros(n, n);
    for (k, b) in blocks.iter().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                m[(2 * k + i, 2 * k + j)] = b[i][j];
            }
        }
    }
    m
}

fn mech_map(params: &ModelParams) -> [[C64; 2]; 2] {
    let s = params.omega.sqrt();
    let c = |v: f64| C64::new(v / params.g_dc, 0.0);
    [[c(1.0 / s), c(0.0)], [c(0.0), c(s)]]
}

fn optical_map(scale: f64) -> [[C64; 2]; 2] {
    [[C64::new(scale, 0.0), C64::new(scale, 0.0)], [C64::new(0.0, -scale), C64::new(0.0, scale)]]
}

pub fn quadrature_map(params: &ModelParams) -> QuadratureMap {
    let opt = 1.0 / params.g_dc;
    QuadratureMap {
        r: block_diag_complex(&[mech_map(params), optical_map(opt / params.kappa.sqrt()), optical_map(opt)]),
    }
}

/// Quadrature map of the mechanics plus a single optical mode.
pub fn quadrature_map_single_mode(params: &ModelParams) -> QuadratureMap {
    QuadratureMap { r: block_diag_complex(&[mech_map(params), optical_map(1.0 / params.g_dc)]) }
}

fn assemble_noise(m: DMatrix<f64>, map: &QuadratureMap, g_dc: f64) -> NoiseModel {
    let d_b = (&m + m.transpose()) * (g_dc * g_dc);
    let d_c = &map.r * to_complex(&d_b) * map.r.transpose();
    let d_r = real_part_checked(&d_c, 1e-12, "quadrature diffusion").expect("quadrature diffusion is real");
    let d_r = (&d_r + d_r.transpose()) * 0.5;
    NoiseModel { m, d_b, d_r }
}

/// Noise model of the full three-mode system.
///
/// The pump block carries `kappa^2`, so that an undriven pump relaxes to the
/// vacuum given that its drift rows are scaled by `kappa`.
pub fn noise_model(params: &ModelParams) -> NoiseModel {
    let k2 = params.kappa * params.kappa;
    let m = block_diag_real(&[mech_noise(params), [[0.0, k2], [0.0, 0.0]], [[0.0, 1.0], [0.0, 0.0]]]);
    assemble_noise(m, &quadrature_map(params), params.g_dc)
}

/// Noise model of the mechanics plus a single optical mode (no pump).
pub fn noise_model_single_mode(params: &ModelParams) -> NoiseModel {
    let m = block_diag_real(&[mech_noise(params), [[0.0, 1.0], [0.0, 0.0]]]);
    assemble_noise(m, &quadrature_map_single_mode(params), params.g_dc)
}

/// Symmetric covariance of the physical quadratures.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    pub v: DMatrix<f64>,
}

impl CovarianceMatrix {
    fn from_raw(v: DMatrix<f64>) -> Self {
        Self { v: (&v + v.transpose()) * 0.5 }
    }

    pub fn mechanical_block(&self) -> Matrix2<f64> {
        Matrix2::new(self.v[(0, 0)], self.v[(0, 1)], self.v[(1, 0)], self.v[(1, 1)])
    }

    /// `|A - B|_F / |B|_F`.
    pub fn relative_difference(&self, reference: &CovarianceMatrix) -> f64 {
        (&self.v - &reference.v).norm() / reference.v.norm()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (&self.v - self.v.transpose()).amax() <= tol * self.v.amax().max(1.0)
    }

    /// Largest absolute covariance between a mechanical and an optical quadrature.
    pub fn max_mech_optical_cross(&self) -> f64 {
        let n = self.v.nrows();
        (0..2).flat_map(|i| (2..n).map(move |j| (i, j))).map(|(i, j)| self.v[(i, j)].abs()).fold(0.0, f64::max)
    }
}

/// A stable linearized system together with its noise and basis maps.
#[derive(Debug, Clone)]
pub struct LinearizedSystem {
    pub l: StabilityMatrix,
    pub noise: NoiseModel,
    pub map: QuadratureMap,
    pub g_dc: f64,
    pub report: StabilityReport,
}

impl LinearizedSystem {
    pub fn new(l: StabilityMatrix, noise: NoiseModel, map: QuadratureMap, g_dc: f64, tol: &Tolerances) -> Result<Self> {
        let report = StabilityReport::from_matrix(&l, tol)?;
        Ok(Self { l, noise, map, g_dc, report })
    }

    pub fn dompo(params: &ModelParams, ss: &SteadyState, tol: &Tolerances) -> Result<Self> {
        Self::new(build_stability_matrix(params, ss), noise_model(params), quadrature_map(params), params.g_dc, tol)
    }

    fn require_stable(&self) -> Result<()> {
        if self.report.is_stable() {
            Ok(())
        } else {
            Err(Error::Unstable { margin: self.report.margin })
        }
    }

    /// Drift matrix `A = R L R^{-1}` in the quadrature basis.
    pub fn quadrature_drift(&self) -> Result<DMatrix<f64>> {
        let a = &self.map.r * &self.l.entries * self.map.inverse();
        real_part_checked(&a, 1e-10, "quadrature drift")
    }

    /// Spectral covariance with an explicit symmetrization factor.
    pub fn spectral_with_factor(&self, factor: f64, tol: &Tolerances) -> Result<CovarianceMatrix> {
        self.require_stable()?;
        let eigs = &self.report.eigenvalues;
        let w = left_eigenvectors(&self.l.entries, eigs, 1e-8)?;
        let n = eigs.len();
        let rho = spectral_radius(eigs).max(1.0);
        let g = &w * to_complex(&self.noise.m) * w.transpose();
        let scale = -2.0 * self.g_dc * self.g_dc;
        let mut c = DMatrix::<C64>::zeros(n, n);
        for j in 0..n {
            for l in 0..n {
                let sum = eigs[j] + eigs[l];
                if sum.norm() <= tol.eig_zero * rho {
                    return Err(Error::Marginal { sum: sum.norm() });
                }
                c[(j, l)] = g[(j, l)] * scale / sum;
            }
        }
        let w_inv = w.clone().try_inverse().ok_or(Error::Defective { cond: f64::INFINITY })?;
        let x = &w_inv * (&c + c.transpose()) * w_inv.transpose() * C64::new(factor, 0.0);
        let v = &self.map.r * x * self.map.r.transpose();
        Ok(CovarianceMatrix::from_raw(real_part_checked(&v, 1e-10, "spectral covariance")?))
    }

    pub fn spectral(&self, tol: &Tolerances) -> Result<CovarianceMatrix> {
        self.spectral_with_factor(COVARIANCE_FACTOR, tol)
    }

    /// Solves `A V + V A^T + D_r = 0` in the quadrature basis.
    pub fn lyapunov(&self) -> Result<CovarianceMatrix> {
        self.require_stable()?;
        let a = self.quadrature_drift()?;
        let v = solve_lyapunov(&a, &self.noise.d_r).ok_or_else(|| Error::Numeric("singular Lyapunov operator".into()))?;
        Ok(CovarianceMatrix::from_raw(v))
    }

    /// Solves `L X + X L^T + D_b = 0` in the `(b, b^+)` basis and maps by `R`.
    pub fn lyapunov_complex_basis(&self) -> Result<CovarianceMatrix> {
        self.require_stable()?;
        let x = solve_lyapunov(&self.l.entries, &to_complex(&self.noise.d_b))
            .ok_or_else(|| Error::Numeric("singular Lyapunov operator".into()))?;
        let v = &self.map.r * x * self.map.r.transpose();
        Ok(CovarianceMatrix::from_raw(real_part_checked(&v, 1e-10, "complex-basis covariance")?))
    }
}

pub fn covariance_spectral(params: &ModelParams, ss: &SteadyState, tol: &Tolerances) -> Result<CovarianceMatrix> {
    LinearizedSystem::dompo(params, ss, tol)?.spectral(tol)
}

pub fn covariance_lyapunov(params: &ModelParams, ss: &SteadyState, tol: &Tolerances) -> Result<CovarianceMatrix> {
    LinearizedSystem::dompo(params, ss, tol)?.lyapunov()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloOptions {
    pub n_traj: usize,
    pub tau_end: f64,
    pub dt: f64,
    pub seed: u64,
    /// Combine runs at `dt` and `dt / 2` on shared noise to cancel the
    /// first-order Euler-Maruyama bias of the stationary moments.
    pub extrapolate: bool,
}

impl MonteCarloOptions {
    /// `dt = 0.01 / |lambda_max|`, `tau_end = 10 / |margin|`.
    pub fn recommended(report: &StabilityReport, n_traj: usize, seed: u64) -> Self {
        let fastest = spectral_radius(&report.eigenvalues);
        Self { n_traj, tau_end: 10.0 / report.margin.abs(), dt: 0.01 / fastest, seed, extrapolate: true }
    }
}

/// Monte Carlo estimate and its entrywise standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloEstimate {
    pub covariance: CovarianceMatrix,
    pub stderr: DMatrix<f64>,
}

fn stream_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(0x632b_e59b_d9b4_e019);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Time-averaged second moments of one trajectory at step `dt` and, on the
/// same Brownian path, at `dt / 2`.
fn simulate_pair<const N: usize>(a: &SMatrix<f64, N, N>, b: &SMatrix<f64, N, N>, steps: usize, keep_from: usize, dt: f64, seed: u64) -> (SMatrix<f64, N, N>, SMatrix<f64, N, N>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 0.5 * dt;
    let coarse_map = SMatrix::<f64, N, N>::identity() + a * dt;
    let fine_map = SMatrix::<f64, N, N>::identity() + a * half;
    let b_half = b * half.sqrt();
    let mut xc = SVector::<f64, N>::zeros();
    let mut xf = SVector::<f64, N>::zeros();
    let mut acc_c = SMatrix::<f64, N, N>::zeros();
    let mut acc_f = SMatrix::<f64, N, N>::zeros();
    for n in 0..steps {
        let w1 = b_half * SVector::<f64, N>::from_fn(|_, _| rng.sample(StandardNormal));
        let w2 = b_half * SVector::<f64, N>::from_fn(|_, _| rng.sample(StandardNormal));
        let keep = n >= keep_from;
        xf = fine_map * xf + w1;
        if keep {
            acc_f += xf * xf.transpose();
        }
        xf = fine_map * xf + w2;
        if keep {
            acc_f += xf * xf.transpose();
        }
        xc = coarse_map * xc + w1 + w2;
        if keep {
            acc_c += xc * xc.transpose();
        }
    }
    let kept = (steps - keep_from) as f64;
    (acc_c / kept, acc_f / (2.0 * kept))
}

fn montecarlo_fixed<const N: usize>(a: &DMatrix<f64>, b: &DMatrix<f64>, opts: &MonteCarloOptions) -> MonteCarloEstimate {
    let a = SMatrix::<f64, N, N>::from_fn(|i, j| a[(i, j)]);
    let b = SMatrix::<f64, N, N>::from_fn(|i, j| b[(i, j)]);
    let steps = (opts.tau_end / opts.dt).ceil() as usize;
    let keep_from = steps / 2;
    let extrapolate = opts.extrapolate;
    let samples: Vec<SMatrix<f64, N, N>> = (0..opts.n_traj)
        .into_par_iter()
        .map(|k| {
            let (coarse, fine) = simulate_pair(&a, &b, steps, keep_from, opts.dt, stream_seed(opts.seed, k as u64));
            if extrapolate {
                fine * 2.0 - coarse
            } else {
                coarse
            }
        })
        .collect();
    let n = samples.len() as f64;
    let mean = samples.iter().fold(SMatrix::<f64, N, N>::zeros(), |acc, s| acc + s) / n;
    let var = samples.iter().fold(SMatrix::<f64, N, N>::zeros(), |acc, s| {
        let d = s - mean;
        acc + d.component_mul(&d)
    }) / (n - 1.0);
    let se = var.map(|v| (v / n).sqrt());
    MonteCarloEstimate {
        covariance: CovarianceMatrix::from_raw(DMatrix::from_fn(N, N, |i, j| mean[(i, j)])),
        stderr: DMatrix::from_fn(N, N, |i, j| se[(i, j)]),
    }
}

/// Euler-Maruyama ensemble estimate of the stationary covariance of
/// `dr = A r dt + B dW` with `B B^T = D`.
///
/// Each trajectory starts at the origin; second moments are averaged over
/// the second half of the run and across trajectories. The standard error
/// comes from the spread of the per-trajectory averages.
pub fn montecarlo_linear(a: &DMatrix<f64>, d: &DMatrix<f64>, opts: &MonteCarloOptions) -> Result<MonteCarloEstimate> {
    let eigs = crate::linalg::eigenvalues_real(a)?;
    let fastest = spectral_radius(&eigs);
    let margin = eigs.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
    if margin >= 0.0 {
        return Err(Error::Unstable { margin });
    }
    if !(opts.dt > 0.0 && opts.dt <= 0.05 / fastest) {
        return Err(Error::Precondition(format!("dt = {} exceeds 0.05/|lambda_max| = {}", opts.dt, 0.05 / fastest)));
    }
    if !(opts.tau_end >= 10.0 / margin.abs() * (1.0 - 1e-12)) {
        return Err(Error::Precondition(format!("tau_end = {} is shorter than 10/|margin| = {}", opts.tau_end, 10.0 / margin.abs())));
    }
    if opts.n_traj < 2 {
        return Err(Error::Precondition("at least two trajectories are needed for an error estimate".into()));
    }
    let b = psd_sqrt(d, 1e-12)?;
    match a.nrows() {
        4 => Ok(montecarlo_fixed::<4>(a, &b, opts)),
        6 => Ok(montecarlo_fixed::<6>(a, &b, opts)),
        n => Err(Error::Domain(format!("Monte Carlo supports 4 or 6 dimensions, got {n}"))),
    }
}

pub fn covariance_montecarlo(params: &ModelParams, ss: &SteadyState, opts: &MonteCarloOptions, tol: &Tolerances) -> Result<MonteCarloEstimate> {
    let sys = LinearizedSystem::dompo(params, ss, tol)?;
    sys.require_stable()?;
    montecarlo_linear(&sys.quadrature_drift()?, &sys.noise.d_r, opts)
}

/// Mechanical state of a stable linearized system, falling back to the
/// Lyapunov route when the spectral formula is not applicable.
pub fn system_mechanical_state(sys: &LinearizedSystem, tol: &Tolerances) -> Result<MechanicalState> {
    let cov = match sys.spectral(tol) {
        Ok(v) => v,
        Err(Error::Defective { .. }) => sys.lyapunov()?,
        Err(e) => return Err(e),
    };
    mechanical_state(&cov.mechanical_block())
}

/// Effective mechanical parameters of the DOMPO over a grid with an `I_s`
/// axis. Each cell uses the nontrivial state at that intensity (the trivial
/// state when `I_s = 0`); unstable cells carry only their instability type.
pub fn effective_map(params_base: &ModelParams, axis1: &Axis, axis2: &Axis, tol: &Tolerances) -> Result<Vec<MapCell>> {
    map_cells(axis1, axis2, |a, b| {
        let (p, i_s) = cell_params(params_base, axis1, a, axis2, b)?;
        let i_s = i_s.expect("map_cells guarantees an intensity axis");
        let (p, ss) = if i_s > 0.0 {
            let ss = reconstruct_amplitudes(&p, i_s, 1)?;
            (p.with_sigma(ss.sigma), ss)
        } else {
            (p, trivial_solution(&p))
        };
        let sys = LinearizedSystem::dompo(&p, &ss, tol)?;
        let stable = sys.report.is_stable();
        let state = if stable { system_mechanical_state(&sys, tol).ok() } else { None };
        Ok(MapCell {
            param1: a,
            param2: b,
            sigma: Some(ss.sigma),
            branch: Some(ss.branch),
            stable,
            instability: (!stable).then_some(sys.report.classification),
            state,
            margin: Some(sys.report.margin),
            system: System::Dompo,
        })
    })
}

/// Reduced state of the mechanical mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanicalState {
    pub n_eff: f64,
    pub r_eff: f64,
    pub theta: f64,
    pub squeeze_factor: f64,
    pub v_minus: f64,
    pub v_plus: f64,
    /// Set when `V+ V- < 1` and `n_eff` was clamped to zero.
    pub clamped: bool,
}

/// Effective occupation, squeezing and orientation of a 2x2 mechanical covariance.
///
/// `theta` is chosen so that `Rot(theta) V Rot(theta)^T = diag(V-, V+)` with
/// `Rot(theta) = [[cos, sin], [-sin, cos]]`, i.e. it is the angle of the
/// minor axis.
pub fn mechanical_state(vm: &Matrix2<f64>) -> Result<MechanicalState> {
    let (a, b, c) = (vm[(0, 0)], 0.5 * (vm[(0, 1)] + vm[(1, 0)]), vm[(1, 1)]);
    let tr = a + c;
    let det = a * c - b * b;
    if !(tr > 0.0 && det > 0.0) {
        return Err(Error::Domain(format!("mechanical covariance not positive definite (tr = {tr:.3e}, det = {det:.3e})")));
    }
    let half_gap = ((a - c) * (a - c) / 4.0 + b * b).sqrt();
    let v_plus = tr / 2.0 + half_gap;
    let v_minus = det / v_plus;
    let prod = v_plus * v_minus;
    let clamped = prod < 1.0;
    let n_eff = if clamped { 0.0 } else { (prod.sqrt() - 1.0) / 2.0 };
    let squeeze_factor = (v_minus / v_plus).sqrt();
    let theta = if half_gap <= 1e-14 * v_plus {
        0.0
    } else {
        // minor axis is perpendicular to the major axis at 0.5 atan2(2b, a - c)
        let major = 0.5 * (2.0 * b).atan2(a - c);
        wrap_half_pi(major + std::f64::consts::FRAC_PI_2)
    };
    Ok(MechanicalState { n_eff, r_eff: -squeeze_factor.ln() / 2.0, theta, squeeze_factor, v_minus, v_plus, clamped })
}

/// Maps an angle into `(-pi/2, pi/2]`.
fn wrap_half_pi(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut t = a.rem_euclid(PI);
    if t > PI / 2.0 {
        t -= PI;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steady::{reconstruct_amplitudes, trivial_solution};
    use std::f64::consts::FRAC_PI_2;

    fn params() -> ModelParams {
        ModelParams { kappa: 1.3, gamma: 0.4, omega: 1.2, delta_p: 0.3, delta_s: -0.6, g: 0.2, n_th: 5.0, ..Default::default() }
    }

    #[test]
    fn diffusion_examples() {
        let p = params();
        let nm = noise_model(&p);
        let d = &nm.d_r;
        assert!((d[(1, 1)] - 4.0 * p.gamma * p.n_th).abs() < 1e-9);
        assert!(d.row(0).iter().all(|v| v.abs() < 1e-12));
        for (k, w) in [(2, 2.0 * p.kappa), (4, 2.0)] {
            assert!((d[(k, k)] - w).abs() < 1e-9 && (d[(k + 1, k + 1)] - w).abs() < 1e-9);
            assert!(d[(k, k + 1)].abs() < 1e-9);
        }
        assert!((&nm.d_r - nm.d_r.transpose()).amax() == 0.0);
    }

    #[test]
    fn undriven_limit() {
        let p = params();
        let tol = Tolerances::default();
        let ss = trivial_solution(&p);
        let v = covariance_spectral(&p, &ss, &tol).unwrap();
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0 * p.n_th, 2.0 * p.n_th, 1.0, 1.0, 1.0, 1.0]));
        assert!((&v.v - &expected).amax() < 1e-9, "{}", v.v);
        let wrong = LinearizedSystem::dompo(&p, &ss, &tol).unwrap().spectral_with_factor(1.0, &tol).unwrap();
        assert!((wrong.v[(4, 4)] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn three_routes_agree() {
        let p = params();
        let tol = Tolerances::default();
        let ss = reconstruct_amplitudes(&p, 1.5, 1).unwrap();
        let p = p.with_sigma(ss.sigma);
        let sys = LinearizedSystem::dompo(&p, &ss, &tol).unwrap();
        assert!(sys.report.is_stable());
        let s = sys.spectral(&tol).unwrap();
        let l = sys.lyapunov().unwrap();
        let c = sys.lyapunov_complex_basis().unwrap();
        assert!(s.relative_difference(&l) < 1e-8);
        assert!(c.relative_difference(&l) < 1e-8);
        assert!(s.is_symmetric(1e-12));
    }

    #[test]
    fn g_dc_drops_out() {
        let tol = Tolerances::default();
        let p = params();
        let ss = reconstruct_amplitudes(&p, 1.5, 1).unwrap();
        let a = covariance_spectral(&p.with_sigma(ss.sigma), &ss, &tol).unwrap();
        let q = ModelParams { g_dc: 0.37, ..p.with_sigma(ss.sigma) };
        let b = covariance_spectral(&q, &ss, &tol).unwrap();
        assert!(a.relative_difference(&b) < 1e-10);
    }

    #[test]
    fn unstable_state_is_rejected() {
        let p = ModelParams { delta_s: 0.0, ..params() }.with_sigma(3.0);
        let ss = trivial_solution(&p);
        assert!(matches!(covariance_spectral(&p, &ss, &Tolerances::default()), Err(Error::Unstable { .. })));
        assert!(matches!(covariance_lyapunov(&p, &ss, &Tolerances::default()), Err(Error::Unstable { .. })));
    }

    #[test]
    fn mechanical_state_examples() {
        let m = mechanical_state(&Matrix2::identity()).unwrap();
        assert_eq!((m.n_eff, m.r_eff, m.theta), (0.0, 0.0, 0.0));
        let m = mechanical_state(&Matrix2::new(1.0, 0.0, 0.0, 4.0)).unwrap();
        assert!((m.n_eff - 0.5).abs() < 1e-15 && (m.squeeze_factor - 0.5).abs() < 1e-15 && m.theta == 0.0);
        let m = mechanical_state(&(Matrix2::identity() * 200.0)).unwrap();
        assert!((m.n_eff - 99.5).abs() < 1e-12 && m.r_eff == 0.0);
        let m = mechanical_state(&Matrix2::new(4.0, 0.0, 0.0, 1.0)).unwrap();
        assert!((m.theta - FRAC_PI_2).abs() < 1e-15);
        let m = mechanical_state(&Matrix2::new(0.5, 0.0, 0.0, 0.5)).unwrap();
        assert!(m.clamped && m.n_eff == 0.0);
        assert!(mechanical_state(&Matrix2::new(1.0, 2.0, 2.0, 1.0)).is_err());
    }

    #[test]
    fn theta_diagonalizes() {
        let vm = Matrix2::new(3.0, 1.2, 1.2, 2.0);
        let m = mechanical_state(&vm).unwrap();
        let (s, c) = m.theta.sin_cos();
        let rot = Matrix2::new(c, s, -s, c);
        let d = rot * vm * rot.transpose();
        assert!((d[(0, 0)] - m.v_minus).abs() < 1e-12 && (d[(1, 1)] - m.v_plus).abs() < 1e-12 && d[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn stream_seeds_differ() {
        assert_ne!(stream_seed(1, 0), stream_seed(1, 1));
        assert_ne!(stream_seed(1, 0), stream_seed(2, 0));
    }
}
