//! Direct integration of the nonlinear classical equations.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::params::{ModelParams, Tolerances};
use crate::scan::fmt_num;
use crate::stability::{build_stability_matrix, StabilityReport};
use crate::steady::SteadyState;

/// Norm beyond which an integration is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalState {
    pub x: f64,
    pub p: f64,
    pub beta_p: C64,
    pub beta_s: C64,
}

impl ClassicalState {
    pub fn from_steady(ss: &SteadyState) -> Self {
        Self { x: ss.x_bar, p: ss.p_bar, beta_p: ss.beta_p, beta_s: ss.beta_s }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.p, self.beta_p.re, self.beta_p.im, self.beta_s.re, self.beta_s.im]
    }

    pub fn from_array(y: &[f64; 6]) -> Self {
        Self { x: y[0], p: y[1], beta_p: C64::new(y[2], y[3]), beta_s: C64::new(y[4], y[5]) }
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn signal_intensity(&self) -> f64 {
        self.beta_s.norm_sqr()
    }
}

/// Time derivative of the mean-field state.
pub fn rhs(params: &ModelParams, s: &ClassicalState) -> ClassicalState {
    let k = params.kappa;
    let i = C64::new(0.0, 1.0);
    let bs = s.beta_s;
    ClassicalState {
        x: params.omega * params.omega * s.p,
        p: -params.gamma * s.p - s.x + 2.0 * params.g * bs.norm_sqr(),
        beta_p: k * (params.sigma - C64::new(1.0, -params.delta_p) * s.beta_p - bs * bs / 2.0),
        beta_s: -(1.0 - i * params.delta_s - i * params.g * s.x) * bs + s.beta_p * bs.conj(),
    }
}

fn rhs_array(params: &ModelParams, y: &[f64; 6]) -> [f64; 6] {
    rhs(params, &ClassicalState::from_array(y)).to_array()
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// One Dormand-Prince step. Returns the fifth-order solution, the embedded
/// error estimate and the derivative at the new point.
pub(crate) fn dp_step<F>(f: &F, y: &[f64; 6], f0: &[f64; 6], h: f64) -> ([f64; 6], [f64; 6], [f64; 6])
where
    F: Fn(&[f64; 6]) -> [f64; 6],
{
    let mut k = [[0.0; 6]; 7];
    k[0] = *f0;
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for d in 0..6 {
                    ys[d] += h * a * kj[d];
                }
            }
        }
        k[s] = f(&ys);
    }
    let mut y5 = *y;
    let mut err = [0.0; 6];
    for s in 0..7 {
        for d in 0..6 {
            y5[d] += h * B5[s] * k[s][d];
            err[d] += h * (B5[s] - B4[s]) * k[s][d];
        }
    }
    (y5, err, k[6])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Defaults to `0.1 / kappa`.
    pub max_step: Option<f64>,
    /// Output spacing; `None` records every accepted step.
    pub sample_dt: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12, max_step: None, sample_dt: None, max_steps: 50_000_000 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ClassicalState>,
    pub method: &'static str,
    pub rtol: f64,
    pub atol: f64,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn last(&self) -> &ClassicalState {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tau,x,p,re_beta_p,im_beta_p,re_beta_s,im_beta_s")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let y = s.to_array();
            let cols: Vec<String> = std::iter::once(*t).chain(y).map(fmt_num).collect();
            writeln!(w, "{}", cols.join(","))?;
        }
        Ok(())
    }
}

/// Adaptive Dormand-Prince integration of the classical equations.
pub fn integrate(params: &ModelParams, init: &ClassicalState, tau_end: f64, rtol: f64, atol: f64) -> Result<Trajectory> {
    integrate_with(params, init, tau_end, &IntegratorOptions { rtol, atol, ..Default::default() })
}

fn hermite(y0: &[f64; 6], f0: &[f64; 6], y1: &[f64; 6], f1: &[f64; 6], h: f64, s: f64) -> [f64; 6] {
    let h00 = 2.0 * s * s * s - 3.0 * s * s + 1.0;
    let h10 = s * s * s - 2.0 * s * s + s;
    let h01 = -2.0 * s * s * s + 3.0 * s * s;
    let h11 = s * s * s - s * s;
    std::array::from_fn(|d| h00 * y0[d] + h10 * h * f0[d] + h01 * y1[d] + h11 * h * f1[d])
}

pub fn integrate_with(params: &ModelParams, init: &ClassicalState, tau_end: f64, opts: &IntegratorOptions) -> Result<Trajectory> {
    if !(tau_end.is_finite() && tau_end > 0.0) {
        return Err(Error::Domain(format!("tau_end must be > 0, got {tau_end}")));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::Domain("integration tolerances must be positive".into()));
    }
    if let Some(dt) = opts.sample_dt {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("sample spacing must be > 0, got {dt}")));
        }
    }
    if !init.is_finite() {
        return Err(Error::Domain("initial state is not finite".into()));
    }
    let f = |y: &[f64; 6]| rhs_array(params, y);
    let max_step = opts.max_step.unwrap_or(0.1 / params.kappa).min(tau_end);

    let mut t = 0.0;
    let mut y = init.to_array();
    let mut fy = f(&y);
    let mut times = vec![0.0];
    let mut states = vec![*init];
    // sample k sits at k * dt; a node within 1e-9 dt of the end is the end
    let sample_time = |k: u64, dt: f64| {
        let ts = k as f64 * dt;
        if ts >= tau_end - 1e-9 * dt {
            tau_end
        } else {
            ts
        }
    };
    let mut sample_k = 1u64;
    let mut next_sample = opts.sample_dt.map(|dt| sample_time(1, dt));
    let mut stats = StepStats::default();

    let ynorm = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let fnorm = fy.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut h = if fnorm > 0.0 { (0.01 * ynorm.max(1e-3) / fnorm).min(max_step) } else { max_step };

    while t < tau_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::Numeric(format!("step budget of {} exhausted at tau = {t}", opts.max_steps)));
        }
        let last = t + h * (1.0 + 1e-10) >= tau_end;
        if last {
            h = tau_end - t;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { tau: t, h });
        }
        let (y5, err, f5) = dp_step(&f, &y, &fy, h);
        let mut acc = 0.0;
        for d in 0..6 {
            let sc = opts.atol + opts.rtol * y[d].abs().max(y5[d].abs());
            acc += (err[d] / sc).powi(2);
        }
        let en = (acc / 6.0).sqrt();
        if !en.is_finite() {
            stats.rejected += 1;
            h *= 0.2;
            continue;
        }
        if en <= 1.0 {
            stats.accepted += 1;
            let t_new = if last { tau_end } else { t + h };
            match (opts.sample_dt, next_sample.as_mut()) {
                (Some(dt), Some(ns)) => {
                    while *ns <= t_new * (1.0 + 1e-14) {
                        let s = ((*ns - t) / h).clamp(0.0, 1.0);
                        times.push(*ns);
                        states.push(ClassicalState::from_array(&hermite(&y, &fy, &y5, &f5, h, s)));
                        sample_k += 1;
                        *ns = if *ns >= tau_end { f64::INFINITY } else { sample_time(sample_k, dt) };
                    }
                }
                _ => {
                    times.push(t_new);
                    states.push(ClassicalState::from_array(&y5));
                }
            }
            t = t_new;
            y = y5;
            fy = f5;
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm <= DIVERGENCE_NORM) {
                return Err(Error::Divergence { tau: t, norm });
            }
            let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * fac).min(max_step);
        } else {
            stats.rejected += 1;
            h *= (0.9 * en.powf(-0.2)).clamp(0.2, 1.0);
        }
    }
    Ok(Trajectory { times, states, method: "dormand-prince-5(4)", rtol: opts.rtol, atol: opts.atol, stats })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeOutcome {
    Decays { rate: f64 },
    Grows { rate: f64 },
    Inconclusive,
}

/// Envelope slope of `ln d(t)`: maxima over equal time segments, then a
/// least-squares line. Returns `(slope, window length)`.
fn envelope_rate(times: &[f64], log_d: &[f64]) -> Option<(f64, f64)> {
    if times.len() < 8 {
        return None;
    }
    let (t0, t1) = (times[0], *times.last().unwrap());
    let n_seg = 20.min(times.len() / 2);
    let mut pts = Vec::with_capacity(n_seg);
    for s in 0..n_seg {
        let lo = t0 + (t1 - t0) * s as f64 / n_seg as f64;
        let hi = t0 + (t1 - t0) * (s + 1) as f64 / n_seg as f64;
        let best = times
            .iter()
            .zip(log_d)
            .filter(|(t, _)| **t >= lo && (**t < hi || s + 1 == n_seg))
            .max_by(|a, b| a.1.total_cmp(b.1));
        if let Some((t, l)) = best {
            pts.push((*t, *l));
        }
    }
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    (sxx > 0.0).then(|| (sxy / sxx, t1 - t0))
}

fn probe_direction(params: &ModelParams, base: &[f64; 6], dir: &[f64; 6], eps: f64, horizon: f64) -> Result<ProbeOutcome> {
    let (rtol, atol) = (1e-11, 1e-13);
    let start: [f64; 6] = std::array::from_fn(|d| base[d] + eps * dir[d]);
    let opts = IntegratorOptions { rtol, atol, sample_dt: Some(horizon / 2000.0), ..Default::default() };
    let traj = match integrate_with(params, &ClassicalState::from_array(&start), horizon, &opts) {
        Ok(t) => t,
        // running away from the state is growth in its own right
        Err(Error::Divergence { .. }) => return Ok(ProbeOutcome::Grows { rate: f64::INFINITY }),
        Err(e) => return Err(e),
    };
    let base_norm = base.iter().map(|v| v * v).sum::<f64>().sqrt();
    let floor = 1e4 * (rtol * base_norm + atol);
    let mut times = Vec::new();
    let mut log_d = Vec::new();
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let y = s.to_array();
        let d = (0..6).map(|k| (y[k] - base[k]).powi(2)).sum::<f64>().sqrt();
        if d > 100.0 * eps || d < floor {
            break;
        }
        times.push(*t);
        log_d.push(d.ln());
    }
    // only the late half reflects the slowest mode
    let skip = times.len() / 2;
    let Some((rate, span)) = envelope_rate(&times[skip..], &log_d[skip..]) else {
        return Ok(ProbeOutcome::Inconclusive);
    };
    let total = log_d.last().unwrap() - log_d[skip];
    Ok(if rate.abs() * span < 1.0 || total.abs() < 1.0 {
        ProbeOutcome::Inconclusive
    } else if rate < 0.0 {
        ProbeOutcome::Decays { rate: -rate }
    } else {
        ProbeOutcome::Grows { rate }
    })
}

/// Dynamical stability check of a fixed point by integrating small
/// perturbations along the leading eigenvector and two random directions.
///
/// Rates are reported as positive numbers for both outcomes.
pub fn perturbation_probe(params: &ModelParams, ss: &SteadyState, eps: f64, horizon: f64) -> Result<ProbeOutcome> {
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::Domain(format!("eps must lie in (0, 1e-2], got {eps}")));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be > 0, got {horizon}")));
    }
    let l = build_stability_matrix(params, ss).real_form()?;
    let lead = leading_direction(&l)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut dirs = vec![lead];
    for _ in 0..2 {
        let v: [f64; 6] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        dirs.push(v.map(|x| x / n));
    }
    let base = ClassicalState::from_steady(ss).to_array();
    let outcomes: Vec<ProbeOutcome> = dirs.iter().map(|d| probe_direction(params, &base, d, eps, horizon)).collect::<Result<_>>()?;

    let grows = outcomes.iter().filter_map(|o| if let ProbeOutcome::Grows { rate } = o { Some(*rate) } else { None });
    if let Some(rate) = grows.fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r)))) {
        return Ok(ProbeOutcome::Grows { rate });
    }
    let decays: Vec<f64> = outcomes.iter().filter_map(|o| if let ProbeOutcome::Decays { rate } = o { Some(*rate) } else { None }).collect();
    if decays.len() == outcomes.len() {
        return Ok(ProbeOutcome::Decays { rate: decays.iter().cloned().fold(f64::INFINITY, f64::min) });
    }
    Ok(ProbeOutcome::Inconclusive)
}

fn leading_direction(l: &DMatrix<f64>) -> Result<[f64; 6]> {
    let eigs = crate::linalg::eigenvalues_real(l)?;
    let lead = eigs.iter().cloned().max_by(|a, b| a.re.total_cmp(&b.re)).expect("nonempty spectrum");
    let shifted = crate::linalg::to_complex(l) - DMatrix::<C64>::identity(6, 6) * lead;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Numeric("SVD failed".into()))?;
    let imin = svd.singular_values.imin();
    let mut v: DVector<C64> = v_t.row(imin).adjoint();
    let k = (0..v.len()).max_by(|&a, &b| v[a].norm().total_cmp(&v[b].norm())).unwrap_or(0);
    let phase = v[k] / v[k].norm();
    v /= phase;
    let mut dir: [f64; 6] = std::array::from_fn(|d| v[d].re);
    let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        dir = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    } else {
        dir.iter_mut().for_each(|x| *x /= n);
    }
    Ok(dir)
}

/// Decay rate from the eigenvalues, for comparison with probe results.
pub fn expected_rate(params: &ModelParams, ss: &SteadyState, tol: &Tolerances) -> Result<f64> {
    Ok(StabilityReport::from_matrix(&build_stability_matrix(params, ss), tol)?.margin.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitCycle {
    pub period: f64,
    /// Half peak-to-peak excursion of `(x, p, Re bp, Im bp, Re bs, Im bs)`.
    pub amplitude: [f64; 6],
    /// Half peak-to-peak excursion of `|beta_s|^2`.
    pub intensity_amplitude: f64,
    /// Relative spread of the crossing intervals; small for a regular cycle.
    pub period_spread: f64,
    pub cycles: usize,
}

pub fn limit_cycle_stats(traj: &Trajectory) -> Option<LimitCycle> {
    limit_cycle_stats_with(traj, 0.5)
}

/// Detects sustained oscillation of `|beta_s|^2` after discarding the
/// leading `discard` fraction of the time span.
///
/// The period is the mean spacing of upward crossings of the mean level.
pub fn limit_cycle_stats_with(traj: &Trajectory, discard: f64) -> Option<LimitCycle> {
    let t_end = *traj.times.last()?;
    let t_cut = traj.times[0] + discard.clamp(0.0, 0.95) * (t_end - traj.times[0]);
    let start = traj.times.iter().position(|&t| t >= t_cut)?;
    let times = &traj.times[start..];
    let states = &traj.states[start..];
    if times.len() < 16 {
        return None;
    }
    let intensity: Vec<f64> = states.iter().map(|s| s.signal_intensity()).collect();
    let (lo, hi) = intensity.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let intensity_amplitude = (hi - lo) / 2.0;
    if !(intensity_amplitude >= 1e-8) {
        return None;
    }
    // a decaying transient is not a cycle
    let q = intensity.len() / 4;
    let spread = |s: &[f64]| {
        let (a, b) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        b - a
    };
    if spread(&intensity[3 * q..]) < 0.5 * spread(&intensity[2 * q..3 * q]) {
        return None;
    }
    let mean = intensity.iter().sum::<f64>() / intensity.len() as f64;
    let mut crossings = Vec::new();
    for k in 1..intensity.len() {
        let (a, b) = (intensity[k - 1] - mean, intensity[k] - mean);
        if a < 0.0 && b >= 0.0 {
            let s = a / (a - b);
            crossings.push(times[k - 1] + s * (times[k] - times[k - 1]));
        }
    }
    if crossings.len() < 3 {
        return None;
    }
    let intervals: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
    let n = intervals.len() as f64;
    let period = (crossings.last().unwrap() - crossings[0]) / n;
    let var = intervals.iter().map(|d| (d - period).powi(2)).sum::<f64>() / n;

    let mut amplitude = [0.0; 6];
    for (d, a) in amplitude.iter_mut().enumerate() {
        let (lo, hi) = states
            .iter()
            .map(|s| s.to_array()[d])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        *a = (hi - lo) / 2.0;
    }
    Some(LimitCycle { period, amplitude, intensity_amplitude, period_spread: var.sqrt() / period, cycles: intervals.len() })
}
