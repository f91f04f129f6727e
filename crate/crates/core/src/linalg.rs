//! Small dense-matrix helpers shared by the autodiff kernels, the analytic
//! oracles, and the analysis probes. Row-major `f64` throughout.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::contract(
                "Matrix::from_vec",
                format!("{rows}x{cols} needs {} entries, got {}", rows * cols, data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(CoreError::ShapeMismatch {
                op: "matmul",
                lhs: format!("{}x{}", self.rows, self.cols),
                rhs: format!("{}x{}", other.rows, other.cols),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        matmul_nn(
            &self.data,
            (self.rows, self.cols),
            &other.data,
            (other.rows, other.cols),
            &mut out.data,
        );
        Ok(out)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(CoreError::ShapeMismatch {
                op: "sub",
                lhs: format!("{}x{}", self.rows, self.cols),
                rhs: format!("{}x{}", other.rows, other.cols),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Largest singular value, via the symmetric eigendecomposition of the
    /// smaller Gram matrix.
    pub fn spectral_norm(&self) -> f64 {
        let gram = self.gram_small();
        let (vals, _) = crate::eig::jacobi_eigen(&gram).expect("gram is symmetric");
        vals.iter().cloned().fold(0.0_f64, f64::max).max(0.0).sqrt()
    }

    /// The smaller of AᵀA / AAᵀ.
    fn gram_small(&self) -> Matrix {
        if self.rows <= self.cols {
            // A·Aᵀ
            let mut g = Matrix::zeros(self.rows, self.rows);
            matmul_nt(
                &self.data,
                (self.rows, self.cols),
                &self.data,
                (self.rows, self.cols),
                &mut g.data,
            );
            g
        } else {
            // Aᵀ·A
            let mut g = Matrix::zeros(self.cols, self.cols);
            matmul_tn(
                &self.data,
                (self.rows, self.cols),
                &self.data,
                (self.rows, self.cols),
                &mut g.data,
            );
            g
        }
    }
}

/// out[m×n] += a[m×k] · b[k×n]. `out` must be pre-sized; contents are added to.
pub fn matmul_nn(a: &[f64], (m, k): (usize, usize), b: &[f64], (k2, n): (usize, usize), out: &mut [f64]) {
    assert_eq!(k, k2, "matmul_nn inner dims");
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k2 * n);
    assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (l, &a_il) in a_row.iter().enumerate() {
            let b_row = &b[l * n..(l + 1) * n];
            axpy(a_il, b_row, out_row);
        }
    }
}

/// out[m×n] += a[m×k] · b[n×k]ᵀ (dot products of rows).
pub fn matmul_nt(a: &[f64], (m, k): (usize, usize), b: &[f64], (n, k2): (usize, usize), out: &mut [f64]) {
    assert_eq!(k, k2, "matmul_nt inner dims");
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), n * k2);
    assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            out_row[j] += dot(a_row, b_row);
        }
    }
}

/// out[k×n] += a[m×k]ᵀ · b[m×n].
pub fn matmul_tn(a: &[f64], (m, k): (usize, usize), b: &[f64], (m2, n): (usize, usize), out: &mut [f64]) {
    assert_eq!(m, m2, "matmul_tn inner dims");
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), m2 * n);
    assert_eq!(out.len(), k * n);
    for l in 0..m {
        let a_row = &a[l * k..(l + 1) * k];
        let b_row = &b[l * n..(l + 1) * n];
        for (j, &a_lj) in a_row.iter().enumerate() {
            let out_row = &mut out[j * n..(j + 1) * n];
            axpy(a_lj, b_row, out_row);
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Solves A·X = B for square A via Gaussian elimination with partial
/// pivoting. Intended for the tiny Gram systems in the oracles.
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != a.cols {
        return Err(CoreError::contract("solve", "matrix must be square"));
    }
    if a.rows != b.rows {
        return Err(CoreError::ShapeMismatch {
            op: "solve",
            lhs: format!("{}x{}", a.rows, a.cols),
            rhs: format!("{}x{}", b.rows, b.cols),
        });
    }
    let n = a.rows;
    let m = b.cols;
    let mut lhs = a.data.clone();
    let mut rhs = b.data.clone();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| {
                lhs[r1 * n + col]
                    .abs()
                    .total_cmp(&lhs[r2 * n + col].abs())
            })
            .unwrap();
        let pivot = lhs[pivot_row * n + col];
        if pivot.abs() < 1e-300 {
            return Err(CoreError::Singular {
                op: "solve",
                value: pivot.abs(),
                limit: 1e-300,
            });
        }
        if pivot_row != col {
            for j in 0..n {
                lhs.swap(col * n + j, pivot_row * n + j);
            }
            for j in 0..m {
                rhs.swap(col * m + j, pivot_row * m + j);
            }
        }
        for row in (col + 1)..n {
            let factor = lhs[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                lhs[row * n + j] -= factor * lhs[col * n + j];
            }
            for j in 0..m {
                rhs[row * m + j] -= factor * rhs[col * m + j];
            }
        }
    }
    for col in (0..n).rev() {
        let pivot = lhs[col * n + col];
        for j in 0..m {
            let mut v = rhs[col * m + j];
            for l in (col + 1)..n {
                v -= lhs[col * n + l] * rhs[l * m + j];
            }
            rhs[col * m + j] = v / pivot;
        }
    }
    Matrix::from_vec(n, m, rhs)
}
