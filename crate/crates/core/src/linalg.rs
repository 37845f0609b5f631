//! Small tridiagonal kernels shared by the path solver and the fluctuation
//! analysis.

use crate::error::{Error, Result};

/// Precomputed Thomas factorization of `tridiag(-1, 2, -1)` of size `n`.
///
/// The path iteration applies the inverse of this matrix once per step, and the
/// matrix depends only on the number of time slices.
#[derive(Debug, Clone)]
pub struct SecondDifference {
    /// Modified super-diagonal coefficients `c'_k`.
    upper: Vec<f64>,
    /// Reciprocal pivots.
    inv_pivot: Vec<f64>,
}

impl SecondDifference {
    pub fn new(n: usize) -> Self {
        let mut upper = Vec::with_capacity(n);
        let mut inv_pivot = Vec::with_capacity(n);
        let mut prev = 0.0;
        for _ in 0..n {
            let pivot = 2.0 + prev; // 2 - (-1) * c'_{k-1}
            let inv = 1.0 / pivot;
            inv_pivot.push(inv);
            prev = -inv;
            upper.push(prev);
        }
        Self { upper, inv_pivot }
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    /// Overwrites `rhs` with `T^{-1} rhs`.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(rhs.len(), n);
        if n == 0 {
            return;
        }
        rhs[0] *= self.inv_pivot[0];
        for k in 1..n {
            rhs[k] = (rhs[k] + rhs[k - 1]) * self.inv_pivot[k];
        }
        for k in (0..n - 1).rev() {
            rhs[k] -= self.upper[k] * rhs[k + 1];
        }
    }
}

/// General tridiagonal solve (Thomas algorithm, no pivoting).
///
/// `sub[k]` couples row `k` to `k-1` (`sub[0]` unused), `sup[k]` couples row
/// `k` to `k+1` (last entry unused).
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if sub.len() != n || sup.len() != n || rhs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rhs.len().min(sub.len()).min(sup.len()),
        });
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    for k in 0..n {
        if k > 0 {
            denom = diag[k] - sub[k] * c[k - 1];
        }
        if denom.abs() < 1e-300 || !denom.is_finite() {
            return Err(Error::Singular(format!("zero pivot in tridiagonal solve at row {k}")));
        }
        c[k] = sup[k] / denom;
        d[k] = if k == 0 {
            rhs[0] / denom
        } else {
            (rhs[k] - sub[k] * d[k - 1]) / denom
        };
    }
    for k in (0..n - 1).rev() {
        d[k] -= c[k] * d[k + 1];
    }
    Ok(d)
}

/// Forward Jacobi sequence of `tridiag(-1, c_k, -1)`.
///
/// `c` holds the diagonal for interior slices `1..n` (index `k-1` for slice
/// `k`). Returns `y_0..=y_n` with `y_0 = 0`, `y_1 = 1` and
/// `y_{k+1} = c_k y_k - y_{k-1}`; `y_k` is the leading principal minor of
/// order `k-1`, so `y_n` is the determinant.
pub fn jacobi_forward(c: &[f64]) -> Vec<f64> {
    let n = c.len() + 1;
    let mut y = vec![0.0; n + 1];
    y[1] = 1.0;
    for k in 1..n {
        y[k + 1] = c[k - 1] * y[k] - y[k - 1];
    }
    y
}

/// Backward Jacobi sequence: `z_n = 0`, `z_{n-1} = 1`,
/// `z_{k-1} = c_k z_k - z_{k+1}`. Returns `z_0..=z_n`.
pub fn jacobi_backward(c: &[f64]) -> Vec<f64> {
    let n = c.len() + 1;
    let mut z = vec![0.0; n + 1];
    z[n - 1] = 1.0;
    for k in (1..n).rev() {
        z[k - 1] = c[k - 1] * z[k] - z[k + 1];
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn dense(c: &[f64]) -> DMatrix<f64> {
        let n = c.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                c[i]
            } else if i.abs_diff(j) == 1 {
                -1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn second_difference_inverse() {
        let n = 7;
        let f = SecondDifference::new(n);
        let rhs: Vec<f64> = (0..n).map(|k| (k as f64 * 0.7).sin()).collect();
        let mut x = rhs.clone();
        f.solve_in_place(&mut x);
        let t = dense(&vec![2.0; n]);
        let back = &t * nalgebra::DVector::from_vec(x);
        for k in 0..n {
            assert_relative_eq!(back[k], rhs[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn general_solver_matches_dense() {
        let diag = vec![4.0, 3.0, 5.0, 2.5];
        let sub = vec![0.0, -1.0, 0.5, -0.7];
        let sup = vec![1.0, -0.2, 0.3, 0.0];
        let rhs = vec![1.0, 2.0, 3.0, 4.0];
        let x = solve_tridiagonal(&sub, &diag, &sup, &rhs).unwrap();
        let m = DMatrix::from_fn(4, 4, |i, j| {
            if i == j {
                diag[i]
            } else if j + 1 == i {
                sub[i]
            } else if i + 1 == j {
                sup[i]
            } else {
                0.0
            }
        });
        let back = m * nalgebra::DVector::from_vec(x);
        for k in 0..4 {
            assert_relative_eq!(back[k], rhs[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn jacobi_determinant_and_free_case() {
        let c = vec![2.3, 1.9, 2.7, 2.05, 2.2];
        let y = jacobi_forward(&c);
        assert_relative_eq!(y[c.len() + 1], dense(&c).determinant(), max_relative = 1e-12);
        let z = jacobi_backward(&c);
        assert_relative_eq!(z[0], dense(&c).determinant(), max_relative = 1e-12);

        let free = jacobi_forward(&[2.0; 9]);
        for (k, v) in free.iter().enumerate() {
            assert_relative_eq!(*v, k as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_pivot_detected() {
        let r = solve_tridiagonal(&[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]);
        assert!(matches!(r, Err(Error::Singular(_))));
    }
}
