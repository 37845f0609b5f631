//! Gaussian smoothness prior over mesh potentials.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::model::{Grid, MeshFunction, MeshRole, PotentialField};

/// Prior weight `gamma`, smoothness kernel `K = -d^2/dx^2` and reference `v0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorModel {
    gamma: f64,
    kernel: DMatrix<f64>,
    reference: Vec<f64>,
}

/// `K = (1/dx^2) tridiag(-1, 2, -1)` with the boundary rows kept as full
/// Dirichlet rows (diagonal 2, single neighbour).
pub fn laplacian_kernel(grid: &Grid) -> DMatrix<f64> {
    let n = grid.n_x();
    let s = 1.0 / (grid.dx() * grid.dx());
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            2.0 * s
        } else if i.abs_diff(j) == 1 {
            -s
        } else {
            0.0
        }
    })
}

impl PriorModel {
    /// Laplacian prior with `v0 = 0`.
    pub fn new(grid: &Grid, gamma: f64) -> Result<Self> {
        Self::with_reference(grid, gamma, vec![0.0; grid.n_x()])
    }

    pub fn with_reference(grid: &Grid, gamma: f64, reference: Vec<f64>) -> Result<Self> {
        check_len(grid.n_x(), reference.len())?;
        Self::from_parts(gamma, laplacian_kernel(grid), reference)
    }

    pub fn from_parts(gamma: f64, kernel: DMatrix<f64>, reference: Vec<f64>) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::Domain(format!("gamma must be nonnegative, got {gamma}")));
        }
        if !kernel.is_square() {
            return Err(Error::Domain("prior kernel must be square".into()));
        }
        check_len(kernel.nrows(), reference.len())?;
        let asym = (&kernel - kernel.transpose()).amax();
        if asym > 1e-12 * kernel.amax().max(1.0) {
            return Err(Error::Domain(format!(
                "prior kernel not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        Ok(Self {
            gamma,
            kernel,
            reference,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::from_parts(gamma, self.kernel.clone(), self.reference.clone())
    }

    /// `K u` for a raw vector.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.reference.len();
        (0..n)
            .map(|i| {
                let row = self.kernel.row(i);
                // the Laplacian is banded but callers may supply a dense kernel
                row.iter().zip(u).map(|(k, x)| k * x).sum()
            })
            .collect()
    }

    fn shift(&self, v: &PotentialField) -> Result<Vec<f64>> {
        check_len(self.reference.len(), v.len())?;
        Ok(v.values().iter().zip(&self.reference).map(|(a, b)| a - b).collect())
    }
}

/// `Gamma[v] = (v - v0)^T K (v - v0)`.
pub fn prior_energy(v: &PotentialField, prior: &PriorModel) -> Result<f64> {
    let u = prior.shift(v)?;
    let ku = prior.apply(&u);
    Ok(u.iter().zip(&ku).map(|(a, b)| a * b).sum())
}

/// `K (v - v0)`, half the functional gradient of `Gamma`.
pub fn prior_gradient(v: &PotentialField, prior: &PriorModel) -> Result<MeshFunction> {
    let u = prior.shift(v)?;
    Ok(MeshFunction::new(prior.apply(&u), MeshRole::Derivative))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grid, PhysicsParams};
    use approx::assert_relative_eq;

    fn grid(n: usize, dx: f64) -> Grid {
        let p = PhysicsParams::new(1.0, 1.0).unwrap();
        build_grid(n, 0.0, dx * (n - 1) as f64, 4, &p).unwrap()
    }

    #[test]
    fn kernel_three_nodes() {
        let k = laplacian_kernel(&grid(3, 1.0));
        let expected = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        assert_eq!(k, expected);
    }

    #[test]
    fn kernel_annihilates_constants_inside() {
        let g = grid(8, 0.5);
        let prior = PriorModel::new(&g, 1.0).unwrap();
        let ku = prior.apply(&[3.0; 8]);
        for v in &ku[1..7] {
            assert_eq!(*v, 0.0);
        }
        assert_relative_eq!(ku[0], 3.0 / 0.25);
    }

    #[test]
    fn kernel_eigenvalues_nonnegative() {
        let k = laplacian_kernel(&grid(4, 1.0));
        let eig = k.symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e >= -1e-10));
    }

    #[test]
    fn energy_examples() {
        let g = grid(6, 0.5);
        let prior = PriorModel::new(&g, 1.0).unwrap();
        let v = PotentialField::zeros(6);
        assert_eq!(prior_energy(&v, &prior).unwrap(), 0.0);

        // constant shift: only the two boundary rows contribute, 2 c^2 / dx^2
        let c = 1.7;
        let shifted = PotentialField::new(vec![c; 6]).unwrap();
        assert_relative_eq!(
            prior_energy(&shifted, &prior).unwrap(),
            2.0 * c * c / 0.25,
            max_relative = 1e-14
        );

        let g1 = grid(6, 1.0);
        let p1 = PriorModel::new(&g1, 1.0).unwrap();
        let mut spike = vec![0.0; 6];
        spike[3] = 1.0;
        let s = PotentialField::new(spike).unwrap();
        assert_relative_eq!(prior_energy(&s, &p1).unwrap(), 2.0);
        let grad = prior_gradient(&s, &p1).unwrap();
        assert_eq!(grad.values, vec![0.0, 0.0, -1.0, 2.0, -1.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let prior = PriorModel::new(&grid(5, 1.0), 1.0).unwrap();
        let v = PotentialField::zeros(4);
        assert!(matches!(prior_energy(&v, &prior), Err(Error::DimensionMismatch { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn energy_nonnegative(vals in proptest::collection::vec(-5.0f64..5.0, 3..20), dx in 0.1f64..2.0) {
                let g = grid(vals.len(), dx);
                let prior = PriorModel::new(&g, 1.0).unwrap();
                let v = PotentialField::new(vals).unwrap();
                prop_assert!(prior_energy(&v, &prior).unwrap() >= 0.0);
            }

            #[test]
            fn gradient_matches_central_difference(
                vals in proptest::collection::vec(-2.0f64..2.0, 5..12),
                refs in proptest::collection::vec(-1.0f64..1.0, 12),
            ) {
                let n = vals.len();
                let g = grid(n, 1.0);
                let prior = PriorModel::with_reference(&g, 1.0, refs[..n].to_vec()).unwrap();
                let v = PotentialField::new(vals.clone()).unwrap();
                let grad = prior_gradient(&v, &prior).unwrap();
                let h = 1e-6;
                for j in 0..n {
                    let mut up = vals.clone();
                    up[j] += h;
                    let mut dn = vals.clone();
                    dn[j] -= h;
                    let fd = (prior_energy(&PotentialField::new(up).unwrap(), &prior).unwrap()
                        - prior_energy(&PotentialField::new(dn).unwrap(), &prior).unwrap())
                        / (4.0 * h);
                    let scale = grad.values[j].abs().max(1.0);
                    prop_assert!((fd - grad.values[j]).abs() <= 1e-6 * scale);
                }
            }
        }
    }
}
