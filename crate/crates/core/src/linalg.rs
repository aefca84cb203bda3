//! Small dense linear-algebra helpers for the 4x4 and 6x6 problems.

use nalgebra::{ComplexField, DMatrix, Schur, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Eigenvalues of a real square matrix via the real Schur form.
pub fn eigenvalues_real(a: &DMatrix<f64>) -> Result<Vec<C64>> {
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("Schur decomposition did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn spectral_radius(eigs: &[C64]) -> f64 {
    eigs.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Coefficients `c_0..c_n` of `det(lambda I - A)` by the Faddeev-LeVerrier recursion.
pub fn faddeev_leverrier(a: &DMatrix<C64>) -> Vec<C64> {
    let n = a.nrows();
    let mut c = vec![C64::new(0.0, 0.0); n + 1];
    c[n] = C64::new(1.0, 0.0);
    let id = DMatrix::<C64>::identity(n, n);
    let mut m = DMatrix::<C64>::zeros(n, n);
    for k in 1..=n {
        m = a * &m + &id * c[n - k + 1];
        let am = a * &m;
        c[n - k] = -am.trace() / (k as f64);
    }
    c
}

/// Monic polynomial coefficients (ascending) with the given roots.
pub fn poly_from_roots(roots: &[C64]) -> Vec<C64> {
    let mut c = vec![C64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![C64::new(0.0, 0.0); c.len() + 1];
        for (i, &ci) in c.iter().enumerate() {
            next[i + 1] += ci;
            next[i] -= ci * r;
        }
        c = next;
    }
    c
}

/// Product of two real polynomials given by ascending coefficients.
pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Solves `A X + X A^T + D = 0` by vectorization.
///
/// Uses the plain transpose even for complex matrices, which is what the
/// `(b, b^dagger)` fluctuation basis needs. Returns `None` if the Kronecker
/// operator is singular.
pub fn solve_lyapunov<T: ComplexField + Copy>(a: &DMatrix<T>, d: &DMatrix<T>) -> Option<DMatrix<T>> {
    let n = a.nrows();
    let nn = n * n;
    let mut k = DMatrix::<T>::zeros(nn, nn);
    // column-major vec: vec(A X) = (I (x) A) vec X, vec(X A^T) = (A (x) I) vec X
    for col in 0..n {
        for row in 0..n {
            let r = row + col * n;
            for m in 0..n {
                let c1 = m + col * n;
                k[(r, c1)] += a[(row, m)];
                let c2 = row + m * n;
                k[(r, c2)] += a[(col, m)];
            }
        }
    }
    let rhs = DMatrix::<T>::from_iterator(nn, 1, d.iter().map(|&v| -v));
    let sol = k.lu().solve(&rhs)?;
    Some(DMatrix::from_iterator(n, n, sol.iter().copied()))
}

/// Symmetric square-root factor `B` with `B B^T = D` for a PSD matrix.
///
/// Eigenvalues below `clip` (absolute) are set to zero.
pub fn psd_sqrt(d: &DMatrix<f64>, clip: f64) -> Result<DMatrix<f64>> {
    let sym = (d + d.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let mut sqrt_vals = eig.eigenvalues.clone();
    for v in sqrt_vals.iter_mut() {
        if *v < -clip * scale {
            return Err(Error::Consistency(format!("diffusion matrix not PSD (eigenvalue {v:.3e})")));
        }
        *v = if *v <= clip * scale { 0.0 } else { v.sqrt() };
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&sqrt_vals) * q.transpose())
}

/// Left eigenvectors `w_j` (as rows of the returned matrix) with `w_j^T L = lambda_j w_j^T`.
///
/// Eigenvalues closer than `cluster_tol * rho` are grouped and their joint
/// null space is extracted, so diagonalizable matrices with repeated
/// eigenvalues are handled. Fails with [`Error::Defective`] when a cluster's
/// null space is deficient or the resulting `W` is ill-conditioned.
pub fn left_eigenvectors(l: &DMatrix<C64>, eigs: &[C64], cluster_tol: f64) -> Result<DMatrix<C64>> {
    let n = l.nrows();
    let rho = spectral_radius(eigs).max(1.0);
    let lt = l.transpose();
    let mut w = DMatrix::<C64>::zeros(n, n);
    let mut assigned = vec![false; n];
    for j in 0..n {
        if assigned[j] {
            continue;
        }
        let members: Vec<usize> =
            (j..n).filter(|&k| !assigned[k] && (eigs[k] - eigs[j]).norm() <= cluster_tol * rho).collect();
        let center = members.iter().map(|&k| eigs[k]).sum::<C64>() / members.len() as f64;
        let shifted = &lt - DMatrix::<C64>::identity(n, n) * center;
        let svd = SVD::new(shifted, false, true);
        let v_t = svd.v_t.as_ref().ok_or_else(|| Error::Numeric("SVD failed".into()))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        let smax = svd.singular_values.max().max(1.0);
        for (slot, &k) in members.iter().enumerate() {
            let idx = order[slot];
            let s = svd.singular_values[idx];
            if s > 1e-6 * smax {
                return Err(Error::Defective { cond: smax / s.max(f64::MIN_POSITIVE) });
            }
            // right singular vector = conjugate of the row of V^H
            let v = v_t.row(idx).adjoint();
            let norm = v.norm();
            for i in 0..n {
                w[(k, i)] = v[i] / norm;
            }
            assigned[k] = true;
        }
    }
    let svd = SVD::new(w.clone(), false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = smax / smin.max(f64::MIN_POSITIVE);
    if !cond.is_finite() || cond > 1e10 {
        return Err(Error::Defective { cond });
    }
    Ok(w)
}

pub fn to_complex(a: &DMatrix<f64>) -> DMatrix<C64> {
    a.map(|v| C64::new(v, 0.0))
}

/// Real part of a nominally real complex matrix, checking the imaginary residue.
pub fn real_part_checked(a: &DMatrix<C64>, rel_tol: f64, what: &str) -> Result<DMatrix<f64>> {
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let imag = a.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if imag > rel_tol * scale {
        return Err(Error::Consistency(format!(
            "{what}: imaginary residue {imag:.3e} exceeds {:.3e}",
            rel_tol * scale
        )));
    }
    Ok(a.map(|z| z.re))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn faddeev_leverrier_matches_root_product() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.5, 1.0, 3.0, 0.0, -0.5, 2.0, 1.0]);
        let c = faddeev_leverrier(&to_complex(&a));
        let eigs = eigenvalues_real(&a).unwrap();
        let p = poly_from_roots(&eigs);
        for (x, y) in c.iter().zip(&p) {
            assert!((x - y).norm() < 1e-12 * (1.0 + x.norm()), "{x} {y}");
        }
        // c_0 = det(-A) for odd n
        assert!((c[0].re + a.determinant()).abs() < 1e-12);
    }

    #[test]
    fn lyapunov_scalar_identity() {
        // damped oscillator momentum: var(p) = D_pp / (2 gamma)
        let gamma = 0.3;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -gamma]);
        let d = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 4.0]);
        let x = solve_lyapunov(&a, &d).unwrap();
        assert!((x[(1, 1)] - 4.0 / (2.0 * gamma)).abs() < 1e-12);
        let res = &a * &x + &x * a.transpose() + &d;
        assert!(res.norm() < 1e-12);
    }

    #[test]
    fn psd_sqrt_reconstructs_rank_deficient() {
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 4.0, 1.0, 0.0, 1.0, 2.0]);
        let b = psd_sqrt(&d, 1e-12).unwrap();
        assert!((&b * b.transpose() - &d).norm() < 1e-12);
    }

    #[test]
    fn left_eigenvectors_with_repeated_eigenvalue() {
        let l = to_complex(&DMatrix::from_row_slice(3, 3, &[-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.3, 0.0, -2.0]));
        let eigs = vec![C64::new(-1.0, 0.0), C64::new(-1.0, 0.0), C64::new(-2.0, 0.0)];
        let w = left_eigenvectors(&l, &eigs, 1e-9).unwrap();
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eigs));
        assert!((&w * &l - lam * &w).norm() < 1e-12);
    }

    #[test]
    fn defective_matrix_is_rejected() {
        let l = to_complex(&DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]));
        let eigs = vec![C64::new(-1.0, 0.0); 2];
        assert!(matches!(left_eigenvectors(&l, &eigs, 1e-9), Err(Error::Defective { .. })));
    }
}
