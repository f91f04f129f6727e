//! Symmetric eigendecomposition via cyclic Jacobi rotations.
//!
//! Dependency-free and accurate to near machine precision for the small
//! symmetric matrices used here (Gram/scatter matrices, cosine-distance
//! matrices up to a few hundred rows).

use crate::error::{CoreError, Result};
use crate::linalg::Matrix;

const MAX_SWEEPS: usize = 100;
const TOL: f64 = 1e-12;

/// Returns `(eigenvalues, eigenvectors)` of a symmetric matrix, eigenvalues
/// sorted descending, eigenvectors as matrix columns in matching order.
/// Off-diagonal mass is annihilated until its Frobenius norm falls below
/// `1e-12` relative to the matrix scale.
pub fn jacobi_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if a.rows != a.cols {
        return Err(CoreError::contract("jacobi_eigen", "matrix must be square"));
    }
    let n = a.rows;
    for r in 0..n {
        for c in (r + 1)..n {
            let d = (a.get(r, c) - a.get(c, r)).abs();
            let scale = a.get(r, c).abs().max(a.get(c, r).abs()).max(1.0);
            if d > 1e-9 * scale {
                return Err(CoreError::contract(
                    "jacobi_eigen",
                    format!("matrix not symmetric at ({r},{c}): {} vs {}", a.get(r, c), a.get(c, r)),
                ));
            }
        }
    }
    if n == 0 {
        return Ok((Vec::new(), Matrix::zeros(0, 0)));
    }

    let mut m = a.clone();
    // Symmetrize exactly so rotations preserve symmetry bit-for-bit.
    for r in 0..n {
        for c in (r + 1)..n {
            let avg = 0.5 * (m.get(r, c) + m.get(c, r));
            m.set(r, c, avg);
            m.set(c, r, avg);
        }
    }
    let mut v = Matrix::identity(n);
    let scale = m.data.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    let threshold = TOL * scale;

    for _sweep in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m.get(p, q) * m.get(p, q);
            }
        }
        if (2.0 * off).sqrt() <= threshold {
            return Ok(sorted_eigen(m, v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= TOL * scale / (n as f64 * n as f64) {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                // Stable tangent of the rotation angle.
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                // Rows/columns p and q of the symmetric matrix.
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                // Accumulate the rotation into the eigenvector matrix.
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    Err(CoreError::contract(
        "jacobi_eigen",
        format!("no convergence after {MAX_SWEEPS} sweeps"),
    ))
}

/// Eigenvalues only, sorted descending.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    jacobi_eigen(a).map(|(vals, _)| vals)
}

fn sorted_eigen(m: Matrix, v: Matrix) -> (Vec<f64>, Matrix) {
    let n = m.rows;
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));
    let vals: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            vecs.set(r, new_col, v.get(r, old_col));
        }
    }
    (vals, vecs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix_eigenvalues_are_sorted_diagonal() {
        let a = Matrix::from_vec(3, 3, vec![2.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, -1.0]).unwrap();
        let (vals, _) = jacobi_eigen(&a).unwrap();
        assert_eq!(vals, vec![5.0, 2.0, -1.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        // Eigenvalues of [[a,b],[b,d]] are ((a+d) ± sqrt((a-d)² + 4b²)) / 2.
        let (a, b, d) = (3.0, 1.5, -2.0);
        let m = Matrix::from_vec(2, 2, vec![a, b, b, d]).unwrap();
        let (vals, vecs) = jacobi_eigen(&m).unwrap();
        let disc = ((a - d) * (a - d) + 4.0 * b * b).sqrt();
        let expect = [(a + d + disc) / 2.0, (a + d - disc) / 2.0];
        assert!((vals[0] - expect[0]).abs() < 1e-12);
        assert!((vals[1] - expect[1]).abs() < 1e-12);
        // Residual ‖A·v − λ·v‖ per eigenpair.
        for k in 0..2 {
            for r in 0..2 {
                let av = m.get(r, 0) * vecs.get(0, k) + m.get(r, 1) * vecs.get(1, k);
                assert!((av - vals[k] * vecs.get(r, k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reconstructs_matrix_from_eigenpairs() {
        use rand::Rng;
        let mut rng = crate::rng::stream(11, "eig-test", 0);
        let n = 12;
        let mut a = Matrix::zeros(n, n);
        for r in 0..n {
            for c in r..n {
                let x: f64 = rng.random_range(-2.0..2.0);
                a.set(r, c, x);
                a.set(c, r, x);
            }
        }
        let (vals, vecs) = jacobi_eigen(&a).unwrap();
        // A should equal V·diag(vals)·Vᵀ.
        for r in 0..n {
            for c in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += vecs.get(r, k) * vals[k] * vecs.get(c, k);
                }
                assert!((acc - a.get(r, c)).abs() < 1e-9, "({r},{c}): {acc} vs {}", a.get(r, c));
            }
        }
        // Orthonormal eigenvectors.
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += vecs.get(k, i) * vecs.get(k, j);
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((acc - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_nonsymmetric_input() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(jacobi_eigen(&a).is_err());
    }
}
