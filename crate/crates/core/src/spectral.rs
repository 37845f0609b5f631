//! Exact quantum backend on the position mesh.
//!
//! The outermost mesh nodes are hard walls: eigenfunctions vanish there and
//! the Hamiltonian acts on the `n_x - 2` interior nodes. Eigenvectors are
//! stored on all `n_x` nodes, scaled so that `sum_x phi_a(x) phi_b(x) dx`
//! equals `delta_ab`. Functional derivatives are densities per unit length: a
//! change `h` at node `j` moves a quantity by `h * dx * (derivative)_j`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_len, Error, Result};
use crate::model::{Grid, MeshFunction, MeshRole, PhysicsParams, PotentialField};

/// Eigenpairs of the mesh Hamiltonian, energies ascending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    energies: Vec<f64>,
    /// `n_x` rows, one column per eigenstate.
    states: DMatrix<f64>,
    grid: Grid,
}

/// Diagonal of the thermal density matrix and its trace.
#[derive(Debug, Clone)]
pub struct ThermalState {
    pub rho_diag: MeshFunction,
    pub partition: f64,
    pub beta: f64,
}

impl ThermalState {
    /// `rho_diag / Z`.
    pub fn normalized(&self) -> MeshFunction {
        MeshFunction::new(
            self.rho_diag.values.iter().map(|r| r / self.partition).collect(),
            MeshRole::Density,
        )
    }
}

/// `H = T + diag(v)` on the interior nodes, `T` the three-point stencil
/// `hbar^2/(2 m dx^2) (2, -1)`.
pub fn hamiltonian_matrix(v: &PotentialField, grid: &Grid, params: &PhysicsParams) -> Result<DMatrix<f64>> {
    v.check_grid(grid)?;
    let n = grid.n_x() - 2;
    let t = params.hbar * params.hbar / (2.0 * params.mass * grid.dx() * grid.dx());
    let vals = v.values();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            2.0 * t + vals[i + 1]
        } else if i.abs_diff(j) == 1 {
            -t
        } else {
            0.0
        }
    }))
}

/// Full eigendecomposition of an interior Hamiltonian built on `grid`.
pub fn eigendecompose(h: &DMatrix<f64>, grid: &Grid) -> Result<SpectralDecomposition> {
    let n = grid.n_x() - 2;
    if !h.is_square() {
        return Err(Error::Domain("Hamiltonian must be square".into()));
    }
    check_len(n, h.nrows())?;
    let scale = h.amax().max(1.0);
    let asym = (h - h.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::Domain(format!(
            "Hamiltonian not symmetric (max asymmetry {asym:.3e})"
        )));
    }
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let norm = 1.0 / grid.dx().sqrt();
    let mut states = DMatrix::zeros(grid.n_x(), n);
    let mut energies = Vec::with_capacity(n);
    for (col, &a) in order.iter().enumerate() {
        energies.push(eig.eigenvalues[a]);
        let vec = eig.eigenvectors.column(a);
        // sign gauge: largest component positive
        let imax = vec.iamax();
        let sign = if vec[imax] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            states[(i + 1, col)] = sign * norm * vec[i];
        }
    }
    Ok(SpectralDecomposition {
        energies,
        states,
        grid: grid.clone(),
    })
}

/// Hamiltonian plus eigendecomposition in one call.
pub fn solve_spectrum(v: &PotentialField, grid: &Grid, params: &PhysicsParams) -> Result<SpectralDecomposition> {
    eigendecompose(&hamiltonian_matrix(v, grid, params)?, grid)
}

impl SpectralDecomposition {
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_states(&self) -> usize {
        self.energies.len()
    }

    /// `phi_alpha(x_j)`.
    pub fn state(&self, alpha: usize, j: usize) -> f64 {
        self.states[(j, alpha)]
    }

    /// Boltzmann factors `exp(-beta E_a)`.
    fn weights(&self, beta: f64) -> Vec<f64> {
        self.energies.iter().map(|e| (-beta * e).exp()).collect()
    }
}

/// `rho(x) = sum_a phi_a(x)^2 exp(-beta E_a)` and `Z = sum_a exp(-beta E_a)`.
pub fn boltzmann_diagonal(spec: &SpectralDecomposition, beta: f64) -> ThermalState {
    let w = spec.weights(beta);
    let n_x = spec.grid.n_x();
    let rho: Vec<f64> = (0..n_x)
        .map(|j| {
            let row = spec.states.row(j);
            row.iter().zip(&w).map(|(p, wa)| p * p * wa).sum()
        })
        .collect();
    ThermalState {
        rho_diag: MeshFunction::new(rho, MeshRole::Density),
        partition: w.iter().sum(),
        beta,
    }
}

/// `dZ/dv(x) = -beta rho(x)`.
pub fn dz_dv(spec: &SpectralDecomposition, beta: f64) -> MeshFunction {
    let thermal = boltzmann_diagonal(spec, beta);
    MeshFunction::new(
        thermal.rho_diag.values.iter().map(|r| -beta * r).collect(),
        MeshRole::Derivative,
    )
}

fn degenerate(ea: f64, eb: f64) -> bool {
    (ea - eb).abs() < 1e-9 * ea.abs().max(1.0)
}

fn check_node(spec: &SpectralDecomposition, xi_index: usize) -> Result<()> {
    if xi_index >= spec.grid.n_x() {
        return Err(Error::Domain(format!(
            "node {xi_index} outside mesh of {} nodes",
            spec.grid.n_x()
        )));
    }
    Ok(())
}

/// Derivative of `<x_i|exp(-beta H)|x_i>` with respect to `v(x'')` from the
/// double eigensum: diagonal terms `-beta exp(-beta E_a)`, ordered
/// off-diagonal terms `2 exp(-beta E_a)/(E_a - E_g)`. Near-degenerate pairs use
/// the limit `-beta exp(-beta (E_a + E_g)/2)` per ordered term.
pub fn drho_diag_dv(spec: &SpectralDecomposition, beta: f64, xi_index: usize) -> Result<MeshFunction> {
    check_node(spec, xi_index)?;
    let e = &spec.energies;
    let w = spec.weights(beta);
    let m = e.len();
    let n_x = spec.grid.n_x();
    let phi_i: Vec<f64> = (0..m).map(|a| spec.state(a, xi_index)).collect();
    let mut out = vec![0.0; n_x];
    for (j, o) in out.iter_mut().enumerate() {
        let row = spec.states.row(j);
        let mut acc = 0.0;
        for a in 0..m {
            let fa = phi_i[a] * row[a];
            if fa == 0.0 {
                continue;
            }
            for g in 0..m {
                let weight = if a == g {
                    -beta * w[a]
                } else if degenerate(e[a], e[g]) {
                    -beta * (-0.5 * beta * (e[a] + e[g])).exp()
                } else {
                    2.0 * w[a] / (e[a] - e[g])
                };
                acc += fa * phi_i[g] * row[g] * weight;
            }
        }
        *o = acc;
    }
    Ok(MeshFunction::new(out, MeshRole::Derivative))
}

/// Same derivative with the inner imaginary-time integral done in closed
/// form: `W_ag = exp(-beta E_a) I_ag`, `I = beta` on (near-)degenerate pairs
/// and `(1 - exp(-beta (E_g - E_a)))/(E_g - E_a)` otherwise; the result is
/// `-diag(B W B^T)` with `B_ja = phi_a(x_i) phi_a(x_j)`.
pub fn drho_diag_dv_betaintegral(spec: &SpectralDecomposition, beta: f64, xi_index: usize) -> Result<MeshFunction> {
    check_node(spec, xi_index)?;
    let e = &spec.energies;
    let m = e.len();
    let n_x = spec.grid.n_x();
    let wmat = DMatrix::from_fn(m, m, |a, g| beta_integral(e[a], e[g], beta));
    let b = DMatrix::from_fn(n_x, m, |j, a| spec.state(a, xi_index) * spec.state(a, j));
    let bw = &b * &wmat;
    let out = (0..n_x).map(|j| -bw.row(j).dot(&b.row(j))).collect();
    Ok(MeshFunction::new(out, MeshRole::Derivative))
}

/// `int_0^beta exp(-b' E_a - (beta - b') E_g) db'`.
pub fn beta_integral(ea: f64, eg: f64, beta: f64) -> f64 {
    if degenerate(ea, eg) {
        beta * (-0.5 * beta * (ea + eg)).exp()
    } else {
        let d = eg - ea;
        (-beta * ea).exp() * (-(-beta * d).exp_m1()) / d
    }
}

/// `delta ln rho(x_i) / delta v(x)`: the exact logarithmic derivative.
pub fn exact_log_derivative(
    spec: &SpectralDecomposition,
    thermal: &ThermalState,
    xi_index: usize,
) -> Result<MeshFunction> {
    let rho = thermal.rho_diag.values[xi_index];
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("thermal density vanishes at node {xi_index}")));
    }
    let mut d = drho_diag_dv_betaintegral(spec, thermal.beta, xi_index)?;
    for x in &mut d.values {
        *x /= rho;
    }
    Ok(d)
}

/// Exact normalized thermal density of `v`.
pub fn exact_density(v: &PotentialField, grid: &Grid, params: &PhysicsParams) -> Result<MeshFunction> {
    let spec = solve_spectrum(v, grid, params)?;
    Ok(boltzmann_diagonal(&spec, params.beta).normalized())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grid, quadrature};
    use approx::assert_relative_eq;

    fn setup(n_x: usize, len: f64, mass: f64, beta: f64) -> (Grid, PhysicsParams) {
        let p = PhysicsParams::new(mass, beta).unwrap();
        (build_grid(n_x, 0.0, len, 4, &p).unwrap(), p)
    }

    fn random_field(grid: &Grid, seed: u64) -> PotentialField {
        let mut s = seed;
        let vals = (0..grid.n_x())
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect();
        PotentialField::new(vals).unwrap()
    }

    #[test]
    fn kinetic_stencil() {
        let (g, p) = setup(5, 4.0, 0.5, 1.0);
        let h = hamiltonian_matrix(&PotentialField::zeros(5), &g, &p).unwrap();
        assert_eq!(h.nrows(), 3);
        for i in 0..3 {
            assert_eq!(h[(i, i)], 2.0);
        }
        assert_eq!(h[(0, 1)], -1.0);
        assert_eq!(h[(1, 2)], -1.0);
        assert_eq!(h, h.transpose());
    }

    #[test]
    fn diagonal_input() {
        let (g, _) = setup(5, 4.0, 1.0, 1.0);
        let h = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let s = eigendecompose(&h, &g).unwrap();
        assert_eq!(s.energies(), &[1.0, 2.0, 3.0]);
        assert_eq!(s.state(0, 2), 1.0);
        assert_eq!(s.state(1, 3), 1.0);
        assert_eq!(s.state(2, 1), 1.0);
        let bad = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(eigendecompose(&bad, &g).is_err());
    }

    #[test]
    fn box_spectrum() {
        let (g, p) = setup(201, 20.0, 1.0, 1.0);
        let s = solve_spectrum(&PotentialField::zeros(201), &g, &p).unwrap();
        let t = 1.0 / (2.0 * g.dx() * g.dx());
        for n in 1..=20 {
            let theta = n as f64 * std::f64::consts::PI / 200.0;
            // exact eigenvalues of the discrete box
            assert_relative_eq!(s.energies()[n - 1], 2.0 * t * (1.0 - theta.cos()), max_relative = 1e-10);
            let continuum = (n as f64 * std::f64::consts::PI / 20.0).powi(2) / 2.0;
            assert_relative_eq!(s.energies()[n - 1], continuum, max_relative = 1e-2);
        }
    }

    #[test]
    fn orthonormality_and_closure() {
        let (g, p) = setup(30, 29.0, 0.1, 6.0);
        let s = solve_spectrum(&random_field(&g, 3), &g, &p).unwrap();
        let phi = s.states();
        let gram = phi.transpose() * phi * g.dx();
        assert!((gram - DMatrix::identity(28, 28)).amax() < 1e-10);
        let close = phi * phi.transpose() * g.dx();
        for i in 1..29 {
            for j in 1..29 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((close[(i, j)] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn thermal_trace_and_high_temperature() {
        let (g, p) = setup(30, 29.0, 0.1, 6.0);
        let s = solve_spectrum(&random_field(&g, 5), &g, &p).unwrap();
        let th = boltzmann_diagonal(&s, 6.0);
        assert_relative_eq!(quadrature(&th.rho_diag, &g), th.partition, max_relative = 1e-12);
        assert_relative_eq!(quadrature(&th.normalized(), &g), 1.0, max_relative = 1e-12);
        let hot = boltzmann_diagonal(&s, 1e-12).normalized();
        for j in 1..29 {
            assert_relative_eq!(hot.values[j], 1.0 / 28.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn free_particle_diagonal() {
        let (g, p) = setup(401, 20.0, 1.0, 1.0);
        let s = solve_spectrum(&PotentialField::zeros(401), &g, &p).unwrap();
        let th = boltzmann_diagonal(&s, 1.0);
        let exact = (1.0 / (2.0 * std::f64::consts::PI)).sqrt();
        for j in 100..=300 {
            assert_relative_eq!(th.rho_diag.values[j], exact, max_relative = 2e-2);
        }
    }

    #[test]
    fn harmonic_partition() {
        let (g, p) = setup(401, 20.0, 1.0, 2.0);
        let v = PotentialField::from_fn(&g, |x| 0.5 * (x - 10.0).powi(2)).unwrap();
        let s = solve_spectrum(&v, &g, &p).unwrap();
        let z = boltzmann_diagonal(&s, 2.0).partition;
        assert_relative_eq!(z, 1.0 / (2.0 * 1.0f64.sinh()), max_relative = 1e-2);
    }

    #[test]
    fn dz_dv_finite_difference() {
        let (g, p) = setup(30, 29.0, 0.1, 6.0);
        let v = random_field(&g, 11);
        let s = solve_spectrum(&v, &g, &p).unwrap();
        let d = dz_dv(&s, 6.0);
        assert_relative_eq!(
            quadrature(&d, &g),
            -6.0 * boltzmann_diagonal(&s, 6.0).partition,
            max_relative = 1e-12
        );
        let h = 1e-5;
        for j in [1, 7, 15, 28] {
            let z = |sign: f64| {
                let mut vals = v.values().to_vec();
                vals[j] += sign * h;
                let sp = solve_spectrum(&PotentialField::new(vals).unwrap(), &g, &p).unwrap();
                boltzmann_diagonal(&sp, 6.0).partition
            };
            let fd = (z(1.0) - z(-1.0)) / (2.0 * h * g.dx());
            assert_relative_eq!(fd, d.values[j], max_relative = 1e-6);
        }
        assert!(dz_dv(&s, 0.0).values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn matrix_element_derivative_routes() {
        let (g, p) = setup(30, 29.0, 0.1, 6.0);
        let v = random_field(&g, 17);
        let s = solve_spectrum(&v, &g, &p).unwrap();
        let th = boltzmann_diagonal(&s, 6.0);
        for i in [3, 14, 22] {
            let a = drho_diag_dv(&s, 6.0, i).unwrap();
            let b = drho_diag_dv_betaintegral(&s, 6.0, i).unwrap();
            let diff = a
                .values
                .iter()
                .zip(&b.values)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-10, "routes differ by {diff}");
            assert_relative_eq!(quadrature(&b, &g), -6.0 * th.rho_diag.values[i], max_relative = 1e-10);

            let h = 1e-5;
            for j in [i - 1, i, i + 2, 27] {
                let rho = |sign: f64| {
                    let mut vals = v.values().to_vec();
                    vals[j] += sign * h;
                    let sp = solve_spectrum(&PotentialField::new(vals).unwrap(), &g, &p).unwrap();
                    boltzmann_diagonal(&sp, 6.0).rho_diag.values[i]
                };
                let fd = (rho(1.0) - rho(-1.0)) / (2.0 * h * g.dx());
                let scale = b.values[j].abs().max(1e-3 * th.rho_diag.values[i]);
                assert!(
                    (fd - b.values[j]).abs() < 1e-4 * scale,
                    "node {j}: fd {fd} vs {}",
                    b.values[j]
                );
            }
            let cold = drho_diag_dv(&s, 0.0, i).unwrap();
            assert!(cold.values.iter().all(|&x| x.abs() < 1e-14));
        }
    }

    #[test]
    fn degenerate_limit_and_symmetry() {
        let beta = 2.5;
        let (a, b) = (0.3, 1.7);
        assert_relative_eq!(
            beta_integral(a, b, beta),
            beta_integral(b, a, beta),
            max_relative = 1e-14
        );
        let e = 0.42;
        let near = beta_integral(e, e + 1e-7, beta);
        assert_relative_eq!(near, beta * (-beta * e).exp(), max_relative = 1e-6);
        assert_eq!(beta_integral(e, e, beta), beta * (-beta * e).exp());
    }

    #[test]
    fn sign_gauge_invariance() {
        let (g, p) = setup(20, 19.0, 0.5, 3.0);
        let s = solve_spectrum(&random_field(&g, 23), &g, &p).unwrap();
        let mut flipped = s.clone();
        for a in [0, 3, 7] {
            for j in 0..20 {
                flipped.states[(j, a)] *= -1.0;
            }
        }
        let r1 = boltzmann_diagonal(&s, 3.0).rho_diag.values;
        let r2 = boltzmann_diagonal(&flipped, 3.0).rho_diag.values;
        assert_eq!(r1, r2);
        let d1 = drho_diag_dv_betaintegral(&s, 3.0, 9).unwrap().values;
        let d2 = drho_diag_dv_betaintegral(&flipped, 3.0, 9).unwrap().values;
        for (x, y) in d1.iter().zip(&d2) {
            assert!((x - y).abs() < 1e-13);
        }
    }
}
