//! Linear stability of the classical fixed points and bifurcation search.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, eigenvalues_real, faddeev_leverrier, poly_from_roots, spectral_radius};
use crate::params::{ModelParams, Tolerances};
use crate::steady::{self, SteadyState};

/// Default number of `I_s` grid points in the Hopf searches.
pub const DEFAULT_HOPF_GRID: usize = 2000;
/// Tolerance (relative to `omega`) for accepting a Hopf candidate against the spectrum.
pub const HOPF_VALIDATION_TOL: f64 = 1e-6;

/// Jacobian of the mean-field flow in the basis `(x, p, b1, b1*, b2, b2*, ...)`.
///
/// The first `n_real` coordinates are real; the remainder come in
/// `(beta, beta*)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityMatrix {
    pub entries: DMatrix<C64>,
    pub n_real: usize,
}

impl StabilityMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Change of basis from real coordinates `(.., Re b, Im b, ..)` to `(.., b, b*, ..)`.
    pub fn real_to_complex_basis(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut t = DMatrix::<C64>::zeros(n, n);
        for i in 0..self.n_real {
            t[(i, i)] = C64::new(1.0, 0.0);
        }
        let mut k = self.n_real;
        while k + 1 < n {
            t[(k, k)] = C64::new(1.0, 0.0);
            t[(k, k + 1)] = C64::new(0.0, 1.0);
            t[(k + 1, k)] = C64::new(1.0, 0.0);
            t[(k + 1, k + 1)] = C64::new(0.0, -1.0);
            k += 2;
        }
        t
    }

    /// Similar real matrix acting on `(.., Re b, Im b, ..)`.
    pub fn real_form(&self) -> Result<DMatrix<f64>> {
        let t = self.real_to_complex_basis();
        let t_inv = t.clone().try_inverse().expect("basis change is invertible");
        linalg::real_part_checked(&(t_inv * &self.entries * t), 1e-12, "real form of stability matrix")
    }

    /// Checks `P L P = conj(L)` where `P` swaps each conjugate pair.
    pub fn is_conjugation_symmetric(&self, rel_tol: f64) -> bool {
        let n = self.dim();
        let swap = |i: usize| -> usize {
            if i < self.n_real {
                i
            } else if (i - self.n_real) % 2 == 0 {
                i + 1
            } else {
                i - 1
            }
        };
        let scale = self.entries.iter().map(|z| z.norm()).fold(1.0, f64::max);
        (0..n).all(|i| (0..n).all(|j| (self.entries[(swap(i), swap(j))] - self.entries[(i, j)].conj()).norm() <= rel_tol * scale))
    }

    /// Eigenvalues sorted by descending real part, then descending imaginary part.
    pub fn eigenvalues(&self) -> Result<Vec<C64>> {
        let mut eigs = eigenvalues_real(&self.real_form()?)?;
        eigs.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
        Ok(eigs)
    }
}

/// Builds the 6x6 stability matrix around a DOMPO fixed point.
pub fn build_stability_matrix(params: &ModelParams, ss: &SteadyState) -> StabilityMatrix {
    let (k, g) = (params.kappa, params.g);
    let bs = ss.beta_s;
    let bp = ss.beta_p;
    let x_bar = 2.0 * g * ss.i_s;
    let z = C64::new(0.0, 0.0);
    let r = |v: f64| C64::new(v, 0.0);
    let i = C64::new(0.0, 1.0);
    let rows: [[C64; 6]; 6] = [
        [z, r(params.omega * params.omega), z, z, z, z],
        [r(-1.0), r(-params.gamma), z, z, 2.0 * g * bs.conj(), 2.0 * g * bs],
        [z, z, -k * C64::new(1.0, -params.delta_p), z, -k * bs, z],
        [z, z, z, -k * C64::new(1.0, params.delta_p), z, -k * bs.conj()],
        [i * g * bs, z, bs.conj(), z, -C64::new(1.0, -(params.delta_s + g * x_bar)), bp],
        [-i * g * bs.conj(), z, z, bs, bp.conj(), -C64::new(1.0, params.delta_s + g * x_bar)],
    ];
    StabilityMatrix { entries: DMatrix::from_fn(6, 6, |a, b| rows[a][b]), n_real: 2 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    Stable,
    StaticUnstable,
    DynamicUnstable,
    Marginal,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Stable => "stable",
            Classification::StaticUnstable => "static",
            Classification::DynamicUnstable => "dynamic",
            Classification::Marginal => "marginal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub eigenvalues: Vec<C64>,
    /// Largest real part.
    pub margin: f64,
    pub classification: Classification,
    /// Absolute zero threshold used (eig_zero times the spectral radius).
    pub zero_threshold: f64,
}

impl StabilityReport {
    pub fn from_eigenvalues(mut eigenvalues: Vec<C64>, tol: &Tolerances) -> Self {
        eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
        let thr = tol.eig_zero * spectral_radius(&eigenvalues).max(1.0);
        let lead = eigenvalues[0];
        let margin = lead.re;
        let classification = if margin.abs() <= thr {
            Classification::Marginal
        } else if margin < 0.0 {
            Classification::Stable
        } else if lead.im.abs() > thr {
            Classification::DynamicUnstable
        } else {
            Classification::StaticUnstable
        };
        Self { eigenvalues, margin, classification, zero_threshold: thr }
    }

    pub fn from_matrix(l: &StabilityMatrix, tol: &Tolerances) -> Result<Self> {
        Ok(Self::from_eigenvalues(l.eigenvalues()?, tol))
    }

    pub fn is_stable(&self) -> bool {
        self.classification == Classification::Stable
    }

    pub fn leading(&self) -> C64 {
        self.eigenvalues[0]
    }
}

pub fn classify(params: &ModelParams, ss: &SteadyState, tol: &Tolerances) -> Result<StabilityReport> {
    StabilityReport::from_matrix(&build_stability_matrix(params, ss), tol)
}

/// Real characteristic polynomial `det(lambda I - L) = sum c_n lambda^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharPoly {
    pub c: Vec<f64>,
}

impl CharPoly {
    pub fn degree(&self) -> usize {
        self.c.len() - 1
    }

    pub fn eval(&self, z: C64) -> C64 {
        self.c.iter().rev().fold(C64::new(0.0, 0.0), |acc, &ck| acc * z + ck)
    }

    /// Real part of `P(i w)` for a given `w^2`.
    pub fn even_part(&self, w2: f64) -> f64 {
        // c0 - c2 w^2 + c4 w^4 - c6 w^6 ...
        let mut acc = 0.0;
        let mut pow = 1.0;
        let mut sign = 1.0;
        for k in (0..self.c.len()).step_by(2) {
            acc += sign * self.c[k] * pow;
            pow *= w2;
            sign = -sign;
        }
        acc
    }
}

fn realify(c: Vec<C64>, rho: f64, rel_tol: f64) -> Result<CharPoly> {
    let n = c.len() - 1;
    let mut out = Vec::with_capacity(c.len());
    for (k, ck) in c.iter().enumerate() {
        let binom = (0..k).fold(1.0, |b, i| b * (n - i) as f64 / (i + 1) as f64);
        let scale = ck.norm().max(binom * rho.max(1.0).powi((n - k) as i32));
        if ck.im.abs() > rel_tol * scale {
            return Err(Error::Consistency(format!("characteristic coefficient c_{k} has imaginary part {:.3e}", ck.im)));
        }
        out.push(ck.re);
    }
    Ok(CharPoly { c: out })
}

/// Characteristic polynomial by the Faddeev-LeVerrier recursion.
pub fn char_poly(l: &StabilityMatrix, tol: &Tolerances) -> Result<CharPoly> {
    let rho = l.entries.iter().map(|z| z.norm()).fold(0.0, f64::max) * l.dim() as f64;
    realify(faddeev_leverrier(&l.entries), rho, tol.eig_zero)
}

/// Characteristic polynomial as the product over the spectrum.
pub fn char_poly_from_eigenvalues(eigs: &[C64], tol: &Tolerances) -> Result<CharPoly> {
    realify(poly_from_roots(eigs), spectral_radius(eigs), tol.eig_zero)
}

/// Closed form of the constant coefficient on the nontrivial branch:
/// `c0 = kappa^2 Omega^2 I_s (4 q2 I_s + 2 q1)`.
pub fn c0_closed_form(params: &ModelParams, i_s: f64) -> f64 {
    let q = steady::q_coefficients(params);
    let scale = params.kappa * params.kappa * params.omega * params.omega * i_s;
    scale * (4.0 * q.q2 * i_s + 2.0 * q.q1)
}

/// Optical (g = 0) factor `d_0..d_4` of the characteristic polynomial.
pub fn dopo_coefficients(params: &ModelParams, i_s: f64) -> [f64; 5] {
    let (k, dp, ds) = (params.kappa, params.delta_p, params.delta_s);
    [
        k * k * i_s * (i_s + 2.0 - 2.0 * dp * ds),
        2.0 * k * (i_s + k * (1.0 + i_s + dp * dp)),
        k * (4.0 + 2.0 * i_s + k * (1.0 + dp * dp)),
        2.0 * (1.0 + k),
        1.0,
    ]
}

/// Free mechanical factor `Omega^2 + gamma lambda + lambda^2`.
pub fn mechanical_coefficients(params: &ModelParams) -> [f64; 3] {
    [params.omega * params.omega, params.gamma, 1.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HopfLabel {
    PlusRoot,
    MinusRoot,
    EigScan,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfPoint {
    pub i_s: f64,
    pub omega: f64,
    pub label: HopfLabel,
}

/// Closed-form Hopf point of the uncoupled (g = 0) optical problem: the root
/// of `d0 d3^2 + d1^2 - d1 d2 d3 = 0`, which is linear in `I_s`.
pub fn dopo_hopf(params: &ModelParams) -> Result<Option<HopfPoint>> {
    if params.g != 0.0 {
        return Err(Error::Domain(format!("closed-form Hopf point requires g = 0, got {}", params.g)));
    }
    let (k, dp, ds) = (params.kappa, params.delta_p, params.delta_s);
    if dp * ds >= -1.0 - k * (1.0 + dp * dp) / 2.0 {
        return Ok(None);
    }
    let num = k * (1.0 + dp * dp) * ((2.0 + k).powi(2) + k * k * dp * dp);
    let den = (1.0 + k).powi(2) * (2.0 + k + k * dp * dp + 2.0 * dp * ds);
    let i_s = -num / den;
    let d = dopo_coefficients(params, i_s);
    Ok(Some(HopfPoint { i_s, omega: (d[1] / d[3]).sqrt(), label: HopfLabel::ClosedForm }))
}

fn nontrivial_matrix(params: &ModelParams, i_s: f64) -> Result<StabilityMatrix> {
    let ss = steady::reconstruct_amplitudes(params, i_s, 1)?;
    Ok(build_stability_matrix(params, &ss))
}

/// Checks that the spectrum at `i_s` holds an eigenvalue within tolerance of `+-i omega`.
pub fn validate_hopf(params: &ModelParams, i_s: f64, omega: f64) -> Result<bool> {
    let eigs = nontrivial_matrix(params, i_s)?.eigenvalues()?;
    let target = C64::new(0.0, omega);
    let dist = eigs.iter().map(|&e| (e - target).norm().min((e + target).norm())).fold(f64::INFINITY, f64::min);
    Ok(dist <= HOPF_VALIDATION_TOL * omega.abs())
}

#[derive(Debug, Clone, Copy)]
enum Branches {
    /// `(w^2, even-part residual)` for the + and - roots of the odd-part condition.
    Values([Option<(f64, f64)>; 2]),
    /// `c5` vanishes, the frequency formula is unusable here.
    Degenerate,
}

fn hopf_branches(params: &ModelParams, i_s: f64, tol: &Tolerances) -> Result<Branches> {
    let cp = char_poly(&nontrivial_matrix(params, i_s)?, tol)?;
    let c = &cp.c;
    let scale = c.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    if c[5].abs() <= 1e-12 * scale {
        return Ok(Branches::Degenerate);
    }
    let disc = c[3] * c[3] - 4.0 * c[1] * c[5];
    if disc < 0.0 {
        return Ok(Branches::Values([None, None]));
    }
    let s = disc.sqrt();
    let mut out = [None, None];
    for (slot, w2) in [(c[3] + s) / (2.0 * c[5]), (c[3] - s) / (2.0 * c[5])].into_iter().enumerate() {
        if w2 > 0.0 && w2.is_finite() {
            out[slot] = Some((w2, cp.even_part(w2)));
        }
    }
    Ok(Branches::Values(out))
}

fn hopf_grid(i_max: f64, n: usize) -> Vec<f64> {
    let mut grid = Vec::with_capacity(n + 1);
    grid.push(i_max * 1e-9);
    grid.extend((1..=n).map(|k| i_max * k as f64 / n as f64));
    grid
}

fn dedup_points(mut pts: Vec<HopfPoint>, tol: &Tolerances) -> Vec<HopfPoint> {
    pts.sort_by(|a, b| a.i_s.total_cmp(&b.i_s));
    let mut out: Vec<HopfPoint> = Vec::with_capacity(pts.len());
    for p in pts {
        if let Some(last) = out.last() {
            if (p.i_s - last.i_s).abs() <= 1e3 * tol.root_tol * p.i_s.max(1.0) {
                continue;
            }
        }
        out.push(p);
    }
    out
}

fn bisect_branch(params: &ModelParams, slot: usize, mut a: f64, mut ha: f64, mut b: f64, tol: &Tolerances) -> Result<Option<(f64, f64)>> {
    let mut w2_last = None;
    while (b - a) > tol.root_tol * b.max(1.0) {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        match hopf_branches(params, m, tol)? {
            Branches::Values(v) => match v[slot] {
                Some((w2, h)) => {
                    w2_last = Some(w2);
                    if h == 0.0 {
                        return Ok(Some((m, w2)));
                    }
                    if (h > 0.0) == (ha > 0.0) {
                        a = m;
                        ha = h;
                    } else {
                        b = m;
                    }
                }
                None => return Ok(None),
            },
            Branches::Degenerate => return Ok(None),
        }
    }
    let root = 0.5 * (a + b);
    match hopf_branches(params, root, tol)? {
        Branches::Values(v) => Ok(v[slot].map(|(w2, _)| (root, w2)).or(w2_last.map(|w2| (root, w2)))),
        Branches::Degenerate => Ok(None),
    }
}

/// Hopf points of the nontrivial branch on `(0, i_max]` from the
/// characteristic-polynomial conditions, with the default grid.
pub fn hopf_points(params: &ModelParams, i_max: f64, tol: &Tolerances) -> Result<Vec<HopfPoint>> {
    hopf_points_with_grid(params, i_max, DEFAULT_HOPF_GRID, tol)
}

pub fn hopf_points_with_grid(params: &ModelParams, i_max: f64, n_grid: usize, tol: &Tolerances) -> Result<Vec<HopfPoint>> {
    if !(i_max.is_finite() && i_max > 0.0) {
        return Err(Error::Domain(format!("I_s_max must be > 0, got {i_max}")));
    }
    let grid = hopf_grid(i_max, n_grid.max(2));
    let values: Vec<Branches> = grid.par_iter().map(|&i| hopf_branches(params, i, tol)).collect::<Result<_>>()?;

    let cells: Vec<Vec<HopfPoint>> = (0..grid.len() - 1)
        .into_par_iter()
        .map(|k| -> Result<Vec<HopfPoint>> {
            let (a, b) = (grid[k], grid[k + 1]);
            let (va, vb) = match (values[k], values[k + 1]) {
                (Branches::Values(va), Branches::Values(vb)) => (va, vb),
                _ => return eig_scan_range(params, a, b, 32, tol),
            };
            let mut found = Vec::new();
            // a branch appearing or vanishing inside the cell can hide a crossing
            if (0..2).any(|s| va[s].is_some() != vb[s].is_some()) {
                found.extend(eig_scan_range(params, a, b, 32, tol)?);
            }
            for slot in 0..2 {
                let (Some((_, ha)), Some((_, hb))) = (va[slot], vb[slot]) else { continue };
                if ha * hb > 0.0 {
                    continue;
                }
                let Some((root, w2)) = bisect_branch(params, slot, a, ha, b, tol)? else { continue };
                let omega = w2.sqrt();
                if validate_hopf(params, root, omega)? {
                    let label = if slot == 0 { HopfLabel::PlusRoot } else { HopfLabel::MinusRoot };
                    found.push(HopfPoint { i_s: root, omega, label });
                }
            }
            Ok(found)
        })
        .collect::<Result<_>>()?;
    Ok(dedup_points(cells.into_iter().flatten().collect(), tol))
}

fn unstable_oscillatory_count(params: &ModelParams, i_s: f64, tol: &Tolerances) -> Result<usize> {
    let eigs = nontrivial_matrix(params, i_s)?.eigenvalues()?;
    let rho = spectral_radius(&eigs).max(1.0);
    let re_thr = tol.eig_zero * rho;
    let im_thr = 1e-6 * rho;
    Ok(eigs.iter().filter(|e| e.re > re_thr && e.im.abs() > im_thr).count())
}

fn eig_scan_range(params: &ModelParams, lo: f64, hi: f64, n: usize, tol: &Tolerances) -> Result<Vec<HopfPoint>> {
    let grid: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    let counts: Vec<usize> =
        grid.par_iter().map(|&i| unstable_oscillatory_count(params, i, tol)).collect::<Result<_>>()?;
    let cells: Vec<Option<HopfPoint>> = (0..n)
        .into_par_iter()
        .map(|k| -> Result<Option<HopfPoint>> {
            if counts[k] == counts[k + 1] {
                return Ok(None);
            }
            let (mut a, mut b) = (grid[k], grid[k + 1]);
            let ca = counts[k];
            while (b - a) > tol.root_tol * b.max(1.0) {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if unstable_oscillatory_count(params, m, tol)? == ca {
                    a = m;
                } else {
                    b = m;
                }
            }
            let root = 0.5 * (a + b);
            let eigs = nontrivial_matrix(params, root)?.eigenvalues()?;
            let rho = spectral_radius(&eigs).max(1.0);
            let crossing = eigs
                .iter()
                .filter(|e| e.im > 1e-6 * rho)
                .min_by(|x, y| x.re.abs().total_cmp(&y.re.abs()));
            Ok(crossing.and_then(|e| {
                (e.re.abs() <= HOPF_VALIDATION_TOL * e.im).then_some(HopfPoint { i_s: root, omega: e.im, label: HopfLabel::EigScan })
            }))
        })
        .collect::<Result<_>>()?;
    Ok(cells.into_iter().flatten().collect())
}

/// Independent Hopf search: tracks the number of unstable oscillatory
/// eigenvalues along `I_s` and bisects each change.
pub fn eig_scan_hopf(params: &ModelParams, i_max: f64, n_grid: usize, tol: &Tolerances) -> Result<Vec<HopfPoint>> {
    if n_grid < 100 {
        return Err(Error::Precondition(format!("eigenvalue scan needs n_grid >= 100, got {n_grid}")));
    }
    if !(i_max.is_finite() && i_max > 0.0) {
        return Err(Error::Domain(format!("I_s_max must be > 0, got {i_max}")));
    }
    let pts = eig_scan_range(params, i_max * 1e-9, i_max, n_grid, tol)?;
    Ok(dedup_points(pts, tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundaryKind {
    #[serde(rename = "TP")]
    TurningPoint,
    #[serde(rename = "HB")]
    Hopf,
}

impl BoundaryKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryKind::TurningPoint => "TP",
            BoundaryKind::Hopf => "HB",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub g: f64,
    pub i_s: f64,
    pub kind: BoundaryKind,
    pub omega: Option<f64>,
}

/// Instability loci of the nontrivial branch in the `(g, I_s)` plane.
pub fn phase_boundary(params_base: &ModelParams, g_values: &[f64], i_max: f64, tol: &Tolerances) -> Result<Vec<BoundaryPoint>> {
    if g_values.iter().any(|g| !g.is_finite()) || g_values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("g range must be finite and sorted".into()));
    }
    let columns: Vec<Vec<BoundaryPoint>> = g_values
        .par_iter()
        .map(|&g| -> Result<Vec<BoundaryPoint>> {
            let p = params_base.with_g(g);
            let mut col = Vec::new();
            if let Some(i_tp) = steady::turning_point(&p) {
                if i_tp <= i_max {
                    col.push(BoundaryPoint { g, i_s: i_tp, kind: BoundaryKind::TurningPoint, omega: None });
                }
            }
            for h in hopf_points(&p, i_max, tol)? {
                col.push(BoundaryPoint { g, i_s: h.i_s, kind: BoundaryKind::Hopf, omega: Some(h.omega) });
            }
            col.sort_by(|a, b| a.i_s.total_cmp(&b.i_s));
            Ok(col)
        })
        .collect::<Result<_>>()?;
    Ok(columns.into_iter().flatten().collect())
}
