//! Dense LU factorization with partial pivoting.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// LU factors of a square matrix, `P A = L U`, stored compactly.
#[derive(Debug, Clone)]
pub(crate) struct Lu {
    n: usize,
    factors: Vec<f64>,
    pivots: Vec<usize>,
}

impl Lu {
    /// Factors the row-major `n x n` matrix.
    pub(crate) fn factor(mut a: Vec<f64>, n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut pivots = Vec::with_capacity(n);
        for k in 0..n {
            let (p, pivot_abs) = (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pivot_abs > 1e-14 * scale) {
                return Err(Error::NumericalFailure(format!(
                    "singular matrix in linear solve (pivot {pivot_abs:e} at column {k})"
                )));
            }
            pivots.push(p);
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
            }
            let diag = a[k * n + k];
            for i in k + 1..n {
                let factor = a[i * n + k] / diag;
                a[i * n + k] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        a[i * n + j] -= factor * a[k * n + j];
                    }
                }
            }
        }
        Ok(Self {
            n,
            factors: a,
            pivots,
        })
    }

    /// Solves `A x = b`.
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let a = &self.factors;
        let mut x = b.to_vec();
        for (k, &p) in self.pivots.iter().enumerate() {
            x.swap(k, p);
        }
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= a[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= a[i * n + j] * x[j];
            }
            x[i] = acc / a[i * n + i];
        }
        x
    }

    /// Solves `A^T x = b`.
    pub(crate) fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let a = &self.factors;
        let mut x = b.to_vec();
        // U^T y = b
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= a[j * n + i] * x[j];
            }
            x[i] = acc / a[i * n + i];
        }
        // L^T z = y
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= a[j * n + i] * x[j];
            }
            x[i] = acc;
        }
        for (k, &p) in self.pivots.iter().enumerate().rev() {
            x.swap(k, p);
        }
        x
    }
}

/// Row-major matrix-vector product.
pub(crate) fn mat_vec(a: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| a[i * n..(i + 1) * n].iter().zip(x).map(|(m, v)| m * v).sum())
        .collect()
}
