//! Randomized cross-checks between independent computational routes.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{perturbation_probe, ProbeOutcome};
use crate::error::Result;
use crate::fluctuations::{mechanical_state, LinearizedSystem, MonteCarloOptions, COVARIANCE_FACTOR};
use crate::linalg::poly_mul;
use crate::params::{ModelParams, Tolerances};
use crate::stability::{
    build_stability_matrix, c0_closed_form, char_poly, classify, dopo_coefficients, dopo_hopf, eig_scan_hopf, hopf_points,
    mechanical_coefficients, StabilityReport,
};
use crate::steady::{
    q_coefficients, reconstruct_amplitudes, residuals, sigma_from_intensity, steady_states, trivial_solution, SteadyState,
};

/// Smallest |margin| accepted for randomized points.
pub const MIN_MARGIN: f64 = 0.1;

fn random_params<R: Rng>(rng: &mut R) -> ModelParams {
    ModelParams {
        kappa: rng.random_range(0.5..2.0),
        gamma: rng.random_range(0.3..1.0),
        omega: rng.random_range(0.5..1.5),
        delta_p: rng.random_range(-1.0..1.0),
        delta_s: rng.random_range(-1.0..1.0),
        g: rng.random_range(0.0..0.3),
        g_dc: 1e-3,
        n_th: rng.random_range(1.0..20.0),
        sigma: 0.0,
    }
}

/// A parameter set with a fixed point on either branch.
fn random_point<R: Rng>(rng: &mut R) -> Result<(ModelParams, SteadyState)> {
    let p = random_params(rng);
    let q0 = q_coefficients(&p).q0;
    let choice: f64 = rng.random();
    if choice < 1.0 / 3.0 {
        // trivial state, either side of threshold
        let s2 = q0 * rng.random_range(0.05..2.0);
        let p = p.with_sigma(s2.sqrt());
        Ok((p, trivial_solution(&p)))
    } else {
        let ss = reconstruct_amplitudes(&p, rng.random_range(0.2..4.0), 1)?;
        Ok((p.with_sigma(ss.sigma), ss))
    }
}

/// `n` randomized stable fixed points with margin below `-MIN_MARGIN`.
pub fn random_stable_points(seed: u64, n: usize, tol: &Tolerances) -> Result<Vec<(ModelParams, SteadyState)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (p, ss) = random_point(&mut rng)?;
        let rep = classify(&p, &ss, tol)?;
        if rep.is_stable() && rep.margin <= -MIN_MARGIN {
            out.push((p, ss));
        }
    }
    Ok(out)
}

/// `n` randomized fixed points with |margin| >= `MIN_MARGIN`, alternating
/// stable and unstable.
pub fn random_nonmarginal_points(seed: u64, n: usize, tol: &Tolerances) -> Result<Vec<(ModelParams, SteadyState, StabilityReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let want_stable = out.len() % 2 == 0;
        let (p, ss) = random_point(&mut rng)?;
        let rep = classify(&p, &ss, tol)?;
        if rep.margin.abs() >= MIN_MARGIN && rep.is_stable() == want_stable {
            out.push((p, ss, rep));
        }
    }
    Ok(out)
}

/// Options for [`run_verify`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub n_points: usize,
    pub mc_points: usize,
    pub n_traj: usize,
    pub probe_points: usize,
    /// Symmetrization factor handed to the spectral covariance; anything
    /// other than the default must make the vacuum check fail.
    pub covariance_factor: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 0, n_points: 30, mc_points: 1, n_traj: 1024, probe_points: 6, covariance_factor: COVARIANCE_FACTOR }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.checks.push(CheckResult { name, passed, detail });
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

pub fn run_verify(opts: &VerifyOptions, tol: &Tolerances) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    // steady-state residuals and intensity round trip
    let mut worst_res: f64 = 0.0;
    let mut worst_trip: f64 = 0.0;
    for _ in 0..100 {
        let p = random_params(&mut rng);
        let i_s = rng.random_range(0.01..10.0);
        let sigma = sigma_from_intensity(&p, i_s)?;
        for ss in steady_states(&p.with_sigma(sigma), tol)? {
            let (a, b) = residuals(&p.with_sigma(sigma), &ss);
            worst_res = worst_res.max(a).max(b);
            if ss.i_s > 0.0 {
                worst_trip = worst_trip.max((sigma_from_intensity(&p, ss.i_s)? - sigma).abs() / sigma.max(1.0));
            }
        }
    }
    report.push(
        "steady residuals",
        worst_res <= 1e-10 && worst_trip <= 1e-9,
        format!("max residual {worst_res:.2e}, max sigma round trip {worst_trip:.2e}"),
    );

    // undriven vacuum and thermal limit
    let p0 = random_params(&mut rng);
    let sys = LinearizedSystem::dompo(&p0, &trivial_solution(&p0), tol)?;
    let v = sys.spectral_with_factor(opts.covariance_factor, tol)?;
    let n2 = 2.0 * p0.n_th;
    let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![n2, n2, 1.0, 1.0, 1.0, 1.0]));
    let err = max_abs_diff(&v.v, &expected);
    report.push("vacuum limit", err <= 1e-9, format!("max deviation {err:.2e}"));

    // trivial-branch decoupling at arbitrary coupling
    let mut worst_cross: f64 = 0.0;
    let mut worst_neff: f64 = 0.0;
    for _ in 0..10 {
        let p = random_params(&mut rng);
        let p = p.with_sigma((q_coefficients(&p).q0 * rng.random_range(0.0..0.8)).sqrt());
        let sys = LinearizedSystem::dompo(&p, &trivial_solution(&p), tol)?;
        let v = sys.spectral_with_factor(opts.covariance_factor, tol)?;
        worst_cross = worst_cross.max(v.max_mech_optical_cross());
        let m = mechanical_state(&v.mechanical_block())?;
        worst_neff = worst_neff.max((m.n_eff - (p.n_th - 0.5)).abs()).max(m.r_eff.abs());
    }
    report.push(
        "trivial decoupling",
        worst_cross <= 1e-10 && worst_neff <= 1e-9,
        format!("max cross-covariance {worst_cross:.2e}, max thermal deviation {worst_neff:.2e}"),
    );

    // spectral vs Lyapunov vs complex basis
    let points = random_stable_points(opts.seed.wrapping_add(1), opts.n_points, tol)?;
    let mut worst_lyap: f64 = 0.0;
    let mut worst_basis: f64 = 0.0;
    for (p, ss) in &points {
        let sys = LinearizedSystem::dompo(p, ss, tol)?;
        let s = sys.spectral_with_factor(opts.covariance_factor, tol)?;
        let l = sys.lyapunov()?;
        worst_lyap = worst_lyap.max(s.relative_difference(&l));
        worst_basis = worst_basis.max(sys.lyapunov_complex_basis()?.relative_difference(&l));
    }
    report.push(
        "spectral vs lyapunov",
        worst_lyap <= 1e-8,
        format!("{} points, max relative Frobenius difference {worst_lyap:.2e}", points.len()),
    );
    report.push("basis consistency", worst_basis <= 1e-8, format!("max relative difference {worst_basis:.2e}"));

    // Monte Carlo; 4 standard errors keeps the false-alarm rate of this
    // quick check low across 21 entries
    let mut worst_z: f64 = 0.0;
    for (k, (p, ss)) in points.iter().take(opts.mc_points).enumerate() {
        let sys = LinearizedSystem::dompo(p, ss, tol)?;
        let s = sys.spectral_with_factor(opts.covariance_factor, tol)?;
        let mc = MonteCarloOptions::recommended(&sys.report, opts.n_traj, opts.seed.wrapping_add(100 + k as u64));
        let est = crate::fluctuations::montecarlo_linear(&sys.quadrature_drift()?, &sys.noise.d_r, &mc)?;
        let z = (&est.covariance.v - &s.v).component_div(&est.stderr).amax();
        worst_z = worst_z.max(z);
    }
    if opts.mc_points > 0 {
        report.push(
            "monte carlo",
            worst_z <= 4.0,
            format!("{} points x {} trajectories, max |z| {worst_z:.2}", opts.mc_points.min(points.len()), opts.n_traj),
        );
    }

    // characteristic polynomial identities
    let mut worst_c0: f64 = 0.0;
    let mut worst_fact: f64 = 0.0;
    for (p, ss) in points.iter().filter(|(_, ss)| ss.i_s > 0.0) {
        let cp = char_poly(&build_stability_matrix(p, ss), tol)?;
        let c0 = c0_closed_form(p, ss.i_s);
        worst_c0 = worst_c0.max((cp.c[0] - c0).abs() / c0.abs()).max((cp.c[6] - 1.0).abs());
        let p0 = p.with_g(0.0);
        let ss0 = reconstruct_amplitudes(&p0, ss.i_s, 1)?;
        let cp0 = char_poly(&build_stability_matrix(&p0, &ss0), tol)?;
        let prod = poly_mul(&dopo_coefficients(&p0, ss.i_s), &mechanical_coefficients(&p0));
        for (a, b) in cp0.c.iter().zip(&prod) {
            worst_fact = worst_fact.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    report.push(
        "characteristic polynomial",
        worst_c0 <= 1e-8 && worst_fact <= 1e-10,
        format!("max c0 error {worst_c0:.2e}, max g=0 factorization error {worst_fact:.2e}"),
    );

    // Hopf finders: closed form at g = 0, eigenvalue scan at g > 0
    let mut worst_hopf: f64 = 0.0;
    let mut hopf_ok = true;
    let mut n_sets = 0;
    while n_sets < 3 {
        let p = ModelParams {
            kappa: rng.random_range(0.5..2.0),
            delta_p: rng.random_range(0.5..2.0),
            delta_s: -rng.random_range(5.0..40.0),
            g: 0.0,
            ..ModelParams::default()
        };
        let Some(exact) = dopo_hopf(&p)? else { continue };
        n_sets += 1;
        let found = hopf_points(&p, 2.0 * exact.i_s, tol)?;
        match found.first() {
            Some(h) if found.len() == 1 => {
                worst_hopf = worst_hopf.max((h.i_s - exact.i_s).abs() / exact.i_s).max((h.omega - exact.omega).abs() / exact.omega)
            }
            _ => hopf_ok = false,
        }
    }
    let fast_pump = ModelParams { kappa: 100.0, gamma: 0.005, omega: 10.0, delta_p: 5.0, delta_s: -10.0, g: 0.25, ..ModelParams::default() };
    let poly = hopf_points(&fast_pump, 500.0, tol)?;
    let scan = eig_scan_hopf(&fast_pump, 500.0, 500, tol)?;
    let scan_ok = !poly.is_empty()
        && poly.len() == scan.len()
        && poly.iter().zip(&scan).all(|(a, b)| (a.i_s - b.i_s).abs() <= 1e-6 * a.i_s && (a.omega - b.omega).abs() <= 1e-6 * a.omega);
    report.push(
        "hopf finders",
        hopf_ok && worst_hopf <= 1e-6 && scan_ok,
        format!("closed-form max relative error {worst_hopf:.2e}, polynomial/eigen-scan points {}/{}", poly.len(), scan.len()),
    );

    // dynamical probe against eigenvalues
    let mut agree = 0;
    let probes = random_nonmarginal_points(opts.seed.wrapping_add(2), opts.probe_points, tol)?;
    for (p, ss, rep) in &probes {
        let outcome = perturbation_probe(p, ss, 1e-3, 10.0 / rep.margin.abs())?;
        let ok = match outcome {
            ProbeOutcome::Decays { rate } => rep.is_stable() && (rate - rep.margin.abs()).abs() <= 0.2 * rep.margin.abs(),
            ProbeOutcome::Grows { .. } => !rep.is_stable(),
            ProbeOutcome::Inconclusive => false,
        };
        agree += ok as usize;
    }
    report.push(
        "probe vs eigenvalues",
        agree == probes.len(),
        format!("{agree}/{} verdicts agree", probes.len()),
    );

    Ok(report)
}
