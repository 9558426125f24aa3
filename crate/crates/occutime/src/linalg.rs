//! Small dense/banded linear algebra used by the resolvent and spectral
//! machinery: complex LU with partial pivoting, a pivoted tridiagonal
//! solve, and an implicit-shift QL eigensolver for symmetric tridiagonal
//! matrices that tracks only the first row of the eigenvector matrix.

use num_complex::Complex64;
use thiserror::Error;

const PIVOT_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("singular system: pivot magnitude {0:.3e} below threshold")]
    SingularSystem(f64),
    #[error("QL iteration failed to converge for eigenvalue index {0}")]
    EigFailure(usize),
}

/// Solves `A x = b` in place by LU with partial pivoting; `a` is row-major
/// `n x n` and is destroyed, `b` becomes the solution.
pub fn lu_solve_complex(
    a: &mut [Complex64],
    b: &mut [Complex64],
    n: usize,
) -> Result<(), LinalgError> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_mag = a[col * n + col].norm();
        for row in col + 1..n {
            let mag = a[row * n + col].norm();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = row;
            }
        }
        if pivot_mag < PIVOT_FLOOR {
            return Err(LinalgError::SingularSystem(pivot_mag));
        }
        if pivot_row != col {
            for j in 0..n {
                a.swap(col * n + j, pivot_row * n + j);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / pivot;
            if factor == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in col + 1..n {
                let sub = factor * a[col * n + j];
                a[row * n + j] -= sub;
            }
            b[row] -= factor * b[col];
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in row + 1..n {
            acc -= a[row * n + j] * b[j];
        }
        b[row] = acc / a[row * n + row];
    }
    Ok(())
}

/// Solves a complex tridiagonal system with partial pivoting (LU with one
/// extra superdiagonal of fill-in). `sub[i]` sits on row `i+1`, `sup[i]`
/// on row `i`; all bands are consumed by value.
pub fn tridiag_solve_complex(
    mut sub: Vec<Complex64>,
    mut diag: Vec<Complex64>,
    mut sup: Vec<Complex64>,
    mut rhs: Vec<Complex64>,
) -> Result<Vec<Complex64>, LinalgError> {
    let n = diag.len();
    debug_assert_eq!(sub.len(), n.saturating_sub(1));
    debug_assert_eq!(sup.len(), n.saturating_sub(1));
    debug_assert_eq!(rhs.len(), n);
    if n == 0 {
        return Ok(rhs);
    }
    let zero = Complex64::new(0.0, 0.0);
    let mut fill = vec![zero; n]; // second superdiagonal after pivoting
    for i in 0..n - 1 {
        // Row i has (diag[i], sup[i], fill[i]); row i+1 has (sub[i], diag[i+1], sup[i+1]).
        if sub[i].norm() > diag[i].norm() {
            // Swap rows i and i+1.
            std::mem::swap(&mut diag[i], &mut sub[i]);
            {
                let next_sup = if i + 1 < n - 1 { sup[i + 1] } else { zero };
                let old_sup_i = sup[i];
                sup[i] = diag[i + 1];
                diag[i + 1] = old_sup_i;
                fill[i] = next_sup;
                if i + 1 < n - 1 {
                    sup[i + 1] = zero;
                }
            }
            rhs.swap(i, i + 1);
        }
        let pivot = diag[i];
        if pivot.norm() < PIVOT_FLOOR {
            return Err(LinalgError::SingularSystem(pivot.norm()));
        }
        let factor = sub[i] / pivot;
        diag[i + 1] -= factor * sup[i];
        if i + 1 < n - 1 {
            sup[i + 1] -= factor * fill[i];
        }
        rhs[i + 1] = rhs[i + 1] - factor * rhs[i];
    }
    if diag[n - 1].norm() < PIVOT_FLOOR {
        return Err(LinalgError::SingularSystem(diag[n - 1].norm()));
    }
    // Back substitution against (diag, sup, fill).
    let mut x = vec![zero; n];
    x[n - 1] = rhs[n - 1] / diag[n - 1];
    if n >= 2 {
        x[n - 2] = (rhs[n - 2] - sup[n - 2] * x[n - 1]) / diag[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (rhs[i] - sup[i] * x[i + 1] - fill[i] * x[i + 2]) / diag[i];
    }
    Ok(x)
}

/// Eigendecomposition of a symmetric tridiagonal matrix by the implicit
/// shift QL algorithm. Returns `(eigenvalues, first_components)` sorted
/// ascending by eigenvalue; `first_components[i]` is the 0-th entry of the
/// i-th normalized eigenvector, which is all the spectral-measure
/// construction needs.
pub fn symmetric_tridiag_eigen(
    diag: &[f64],
    off: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), LinalgError> {
    let n = diag.len();
    debug_assert_eq!(off.len(), n.saturating_sub(1));
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(off);
    // Row 0 of the accumulated rotation product; starts as e_0ᵀ.
    let mut z = vec![0.0; n];
    z[0] = 1.0;

    for l in 0..n {
        let mut iter = 0;
        loop {
            // Look for a negligible off-diagonal element.
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(LinalgError::EigFailure(l));
            }
            // Implicit shift from the trailing 2x2.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                // Apply the rotation to the tracked eigenvector row.
                f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let values = order.iter().map(|&i| d[i]).collect();
    let firsts = order.iter().map(|&i| z[i]).collect();
    Ok((values, firsts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn lu_solves_small_complex_system() {
        // A = [[2, 1+i], [1-i, 3]], b = [1, i]
        let mut a = vec![c(2.0, 0.0), c(1.0, 1.0), c(1.0, -1.0), c(3.0, 0.0)];
        let a_orig = a.clone();
        let mut b = vec![c(1.0, 0.0), c(0.0, 1.0)];
        let b_orig = b.clone();
        lu_solve_complex(&mut a, &mut b, 2).unwrap();
        for i in 0..2 {
            let mut r = -b_orig[i];
            for j in 0..2 {
                r += a_orig[i * 2 + j] * b[j];
            }
            assert!(r.norm() < 1e-13);
        }
    }

    #[test]
    fn lu_rejects_singular() {
        let mut a = vec![c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)];
        let mut b = vec![c(1.0, 0.0), c(1.0, 0.0)];
        assert!(matches!(
            lu_solve_complex(&mut a, &mut b, 2),
            Err(LinalgError::SingularSystem(_))
        ));
    }

    #[test]
    fn tridiag_matches_dense_lu() {
        let n = 12;
        // Pseudo-arbitrary but deterministic bands, including weak diagonals
        // so the pivoting path is exercised.
        let sub: Vec<Complex64> = (0..n - 1)
            .map(|i| c(1.0 + (i as f64 * 0.37).sin(), 0.2 * (i as f64).cos()))
            .collect();
        let diag: Vec<Complex64> = (0..n)
            .map(|i| c(0.1 * ((i * 7 % 5) as f64 - 2.0), -0.5 + 0.1 * i as f64))
            .collect();
        let sup: Vec<Complex64> = (0..n - 1)
            .map(|i| c(0.8 - 0.05 * i as f64, (i as f64 * 0.91).sin()))
            .collect();
        let rhs: Vec<Complex64> = (0..n).map(|i| c(1.0 / (1.0 + i as f64), 0.3)).collect();

        let mut dense = vec![c(0.0, 0.0); n * n];
        for i in 0..n {
            dense[i * n + i] = diag[i];
            if i + 1 < n {
                dense[i * n + i + 1] = sup[i];
                dense[(i + 1) * n + i] = sub[i];
            }
        }
        let mut b = rhs.clone();
        lu_solve_complex(&mut dense.clone(), &mut b, n).unwrap();
        let x = tridiag_solve_complex(sub, diag, sup, rhs).unwrap();
        for i in 0..n {
            assert!((x[i] - b[i]).norm() < 1e-10, "component {i}");
        }
    }

    #[test]
    fn ql_two_state_hand_check() {
        // [[-1, 1], [1, -1]]: eigenvalues {-2, 0}, eigenvectors (1,∓1)/√2.
        let (vals, firsts) = symmetric_tridiag_eigen(&[-1.0, -1.0], &[1.0]).unwrap();
        assert!((vals[0] + 2.0).abs() < 1e-14);
        assert!(vals[1].abs() < 1e-14);
        assert!((firsts[0] * firsts[0] - 0.5).abs() < 1e-14);
        assert!((firsts[1] * firsts[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn ql_weights_sum_to_one_and_trace_preserved() {
        let n = 60;
        let diag: Vec<f64> = (0..n).map(|i| -2.0 - 0.01 * (i as f64).sin()).collect();
        let off: Vec<f64> = (0..n - 1).map(|i| 1.0 + 0.05 * (i as f64).cos()).collect();
        let (vals, firsts) = symmetric_tridiag_eigen(&diag, &off).unwrap();
        let wsum: f64 = firsts.iter().map(|w| w * w).sum();
        assert!((wsum - 1.0).abs() < 1e-12);
        let trace: f64 = diag.iter().sum();
        let eigsum: f64 = vals.iter().sum();
        assert!((trace - eigsum).abs() < 1e-10 * trace.abs());
    }

    #[test]
    fn ql_first_moment_matches_matrix_entry() {
        // sum w_i x_i must equal the (0,0) entry of the matrix.
        let diag = [-1.5, -2.0, -2.0, -1.0];
        let off = [1.2, 0.9, 1.1];
        let (vals, firsts) = symmetric_tridiag_eigen(&diag, &off).unwrap();
        let m1: f64 = vals
            .iter()
            .zip(&firsts)
            .map(|(x, z)| z * z * x)
            .sum();
        assert!((m1 - diag[0]).abs() < 1e-12);
    }
}
