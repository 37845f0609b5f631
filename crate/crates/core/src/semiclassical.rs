//! Stationary-phase evaluation of the statistical operator.
//!
//! A diagonal element `<x|exp(-beta H)|x>` is approximated by the closed
//! classical path through `x` and its Gaussian fluctuations:
//! `A_x exp(-S[q_x]/hbar)`. The prefactor is the exact Gaussian integral over
//! the interior lattice slices, `A_x = sqrt(m / (2 pi hbar eps det J))`, with
//! `J = tridiag(-1, c_k, -1)`, `c_k = 2 + eps^2 v''(q_k)/m`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{jacobi_backward, jacobi_forward, solve_tridiagonal};
use crate::model::{
    interp_potential_deriv, mesh_sensitivities, trapezoid, Grid, MeshFunction, MeshRole, PhysicsParams, Potential,
    PotentialField,
};
use crate::paths::{
    discrete_action, discrete_energy, occupation_histogram, shifted_path, ClassicalPath, PathSolver, PathSolverConfig,
};

/// Fraction of mesh nodes allowed to fail in a sweep before it is an error.
pub const MAX_FAILED_FRACTION: f64 = 0.1;

/// Gaussian fluctuation data around one classical path.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationData {
    /// Solution of `J kappa = 0` on the interior with `kappa_0 = kappa_n = 1`.
    pub kappa: Vec<f64>,
    /// `A_x`; from `|det J|` when the Hesse operator is not positive.
    pub prefactor: f64,
    /// `R(tau_k, tau_k)`, zero at both ends.
    pub r_diag: Vec<f64>,
    /// Hesse operator positive definite.
    pub valid: bool,
    /// `det J`.
    pub determinant: f64,
}

/// Diagonal `c_k = 2 + eps^2 v''(q_k)/m` for the interior slices, with the
/// fluctuation curvature.
pub fn hesse_diagonal<P: Potential + ?Sized>(pot: &P, q: &[f64], eps: f64, mass: f64) -> Vec<f64> {
    let s = eps * eps / mass;
    q[1..q.len() - 1]
        .iter()
        .map(|&x| 2.0 + s * pot.fluctuation_curvature(x))
        .collect()
}

/// Same diagonal with the derivative of the solver's force: the Jacobian of
/// the path residual, up to `m/eps^2`.
fn jacobian_diagonal<P: Potential + ?Sized>(pot: &P, q: &[f64], eps: f64, mass: f64) -> Vec<f64> {
    let s = eps * eps / mass;
    q[1..q.len() - 1].iter().map(|&x| 2.0 + s * pot.curvature(x)).collect()
}

/// Determinant of `J` via `kappa`: when `kappa > 0` on the whole lattice,
/// `det J = kappa_0 kappa_n sum_k 1/(kappa_k kappa_{k+1})` (discrete
/// Wronskian); otherwise from the forward recurrence.
fn kappa_and_determinant(c: &[f64], forward: &[f64]) -> (Vec<f64>, f64) {
    let n = c.len() + 1;
    let recurrence = forward[n];
    if c.is_empty() {
        return (vec![1.0, 1.0], 1.0);
    }
    let mut rhs = vec![0.0; n - 1];
    rhs[0] += 1.0;
    rhs[n - 2] += 1.0;
    let sub = vec![-1.0; n - 1];
    let sup = vec![-1.0; n - 1];
    let Ok(inner) = solve_tridiagonal(&sub, c, &sup, &rhs) else {
        let mut kappa = vec![f64::NAN; n + 1];
        kappa[0] = 1.0;
        kappa[n] = 1.0;
        return (kappa, recurrence);
    };
    let mut kappa = Vec::with_capacity(n + 1);
    kappa.push(1.0);
    kappa.extend(inner);
    kappa.push(1.0);
    let det = if kappa.iter().all(|&k| k > 0.0 && k.is_finite()) {
        kappa.windows(2).map(|w| 1.0 / (w[0] * w[1])).sum()
    } else {
        recurrence
    };
    (kappa, det)
}

/// Fluctuation data for a lattice path with `n` steps of length `eps`.
pub fn fluctuation_data<P: Potential + ?Sized>(pot: &P, q: &[f64], eps: f64, mass: f64, hbar: f64) -> FluctuationData {
    let c = hesse_diagonal(pot, q, eps, mass);
    let y = jacobi_forward(&c);
    let z = jacobi_backward(&c);
    let n = c.len() + 1;
    let (kappa, det) = kappa_and_determinant(&c, &y);
    let valid = y[1..].iter().all(|&yk| yk > 0.0) && det > 0.0;
    let prefactor = (mass / (2.0 * std::f64::consts::PI * hbar * eps * det.abs())).sqrt();
    let r_diag = (0..=n).map(|k| eps / mass * y[k] * z[k] / y[n]).collect();
    FluctuationData {
        kappa,
        prefactor,
        r_diag,
        valid,
        determinant: det,
    }
}

/// Lattice Green function of `(m/eps^2) J` with Dirichlet ends and a
/// discrete delta of weight `1/eps`: `R_kl = (eps/m) y_k z_l / y_n`,
/// `k <= l`. Rows and columns `0` and `n` vanish.
pub fn green_function<P: Potential + ?Sized>(pot: &P, q: &[f64], eps: f64, mass: f64) -> Result<DMatrix<f64>> {
    let c = hesse_diagonal(pot, q, eps, mass);
    let y = jacobi_forward(&c);
    let z = jacobi_backward(&c);
    let n = c.len() + 1;
    let scale = y.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    if !(y[n].abs() > 1e-12 * scale) {
        return Err(Error::Singular(format!(
            "fluctuation operator has a zero mode (det {:.3e})",
            y[n]
        )));
    }
    let f = eps / mass / y[n];
    Ok(DMatrix::from_fn(n + 1, n + 1, |k, l| {
        let (a, b) = if k <= l { (k, l) } else { (l, k) };
        f * y[a] * z[b]
    }))
}

/// [`green_function`] for a closed path in the mesh potential.
pub fn fluctuation_green_function(
    path: &ClassicalPath,
    v: &PotentialField,
    grid: &Grid,
    params: &PhysicsParams,
) -> Result<DMatrix<f64>> {
    v.check_grid(grid)?;
    green_function(&v.on(grid), &path.q, grid.eps(), params.mass)
}

/// `A_x exp(-S/hbar)` for a solved path.
pub fn path_element(path: &ClassicalPath, fluct: &FluctuationData, hbar: f64) -> f64 {
    fluct.prefactor * (-path.action / hbar).exp()
}

/// Van Vleck diagonal element at `x` together with its fluctuation data.
pub fn van_vleck_element(
    v: &PotentialField,
    grid: &Grid,
    params: &PhysicsParams,
    x: f64,
    config: &PathSolverConfig,
) -> Result<(f64, FluctuationData)> {
    v.check_grid(grid)?;
    let pot = v.on(grid);
    let solver = PathSolver::for_grid(grid, params, *config)?;
    let path = solver.solve_converged(&pot, x, x, None)?;
    let fluct = fluctuation_data(&pot, &path.q, grid.eps(), params.mass, params.hbar);
    Ok((path_element(&path, &fluct, params.hbar), fluct))
}

/// Prefactor from the mixed end-point derivative, `sqrt(-S_ab/(2 pi hbar))`;
/// `None` when the radicand is not positive.
pub fn prefactor_from_action(mixed_derivative: f64, hbar: f64) -> Option<f64> {
    let radicand = -mixed_derivative / (2.0 * std::f64::consts::PI * hbar);
    (radicand > 0.0).then(|| radicand.sqrt())
}

/// Counters collected during a mesh sweep.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepDiagnostics {
    /// Nodes whose path did not converge even after a warm restart.
    pub failed_nodes: Vec<usize>,
    /// Nodes rescued by a warm restart from a neighbour.
    pub retried: usize,
    /// Nodes whose Hesse operator is not positive definite.
    pub invalid_fluctuations: usize,
    /// Path slices outside the mesh, summed over nodes.
    pub clamped_slices: usize,
}

/// Per-node paths and van Vleck elements over the whole mesh.
#[derive(Debug, Clone)]
pub struct SemiclassicalState {
    /// `A_x exp(-S[q_x]/hbar)`.
    pub diag: MeshFunction,
    pub partition: f64,
    pub paths: Vec<ClassicalPath>,
    pub fluct: Vec<FluctuationData>,
    pub diagnostics: SweepDiagnostics,
}

impl SemiclassicalState {
    pub fn normalized(&self) -> MeshFunction {
        MeshFunction::new(
            self.diag.values.iter().map(|d| d / self.partition).collect(),
            MeshRole::Density,
        )
    }
}

/// Solves the closed path at every mesh node. Nodes are solved in parallel
/// from `previous` (or static starts); failures are retried sequentially
/// from a converged neighbour.
pub fn semiclassical_sweep(
    v: &PotentialField,
    grid: &Grid,
    params: &PhysicsParams,
    config: &PathSolverConfig,
    previous: Option<&[ClassicalPath]>,
) -> Result<SemiclassicalState> {
    v.check_grid(grid)?;
    let pot = v.on(grid);
    let solver = PathSolver::for_grid(grid, params, *config)?;
    let n_x = grid.n_x();
    if let Some(prev) = previous {
        if prev.len() != n_x {
            return Err(Error::DimensionMismatch {
                expected: n_x,
                found: prev.len(),
            });
        }
    }
    let mut paths: Vec<ClassicalPath> = (0..n_x)
        .into_par_iter()
        .map(|j| {
            let x = grid.x(j);
            let init = previous.map(|p| p[j].q.as_slice());
            let first = solver.solve_closed(&pot, x, init)?;
            if first.converged || init.is_none() {
                return Ok(first);
            }
            let fresh = solver.solve_closed(&pot, x, None)?;
            Ok(if fresh.residual_norm < first.residual_norm {
                fresh
            } else {
                first
            })
        })
        .collect::<Result<_>>()?;

    let mut diagnostics = SweepDiagnostics::default();
    // warm restarts: sweep outward from converged neighbours, both directions
    for order in [true, false] {
        let idx: Vec<usize> = if order {
            (1..n_x).collect()
        } else {
            (0..n_x - 1).rev().collect()
        };
        for j in idx {
            if paths[j].converged {
                continue;
            }
            let nb = if order { j - 1 } else { j + 1 };
            if !paths[nb].converged {
                continue;
            }
            let x = grid.x(j);
            let init = shifted_path(&paths[nb].q, x, x);
            let retry = solver.solve_closed(&pot, x, Some(&init))?;
            if retry.converged {
                diagnostics.retried += 1;
                paths[j] = retry;
            }
        }
    }

    let mut fluct = Vec::with_capacity(n_x);
    let mut diag = Vec::with_capacity(n_x);
    for p in &paths {
        let f = fluctuation_data(&pot, &p.q, grid.eps(), params.mass, params.hbar);
        if !f.valid {
            diagnostics.invalid_fluctuations += 1;
        }
        diagnostics.clamped_slices += p.clamped;
        diag.push(path_element(p, &f, params.hbar));
        fluct.push(f);
    }
    diagnostics.failed_nodes = (0..n_x).filter(|&j| !paths[j].converged).collect();
    let failed = diagnostics.failed_nodes.len();
    if failed as f64 > MAX_FAILED_FRACTION * n_x as f64 || failed == n_x {
        return Err(Error::FailedNodes {
            failed,
            total: n_x,
            nodes: diagnostics.failed_nodes,
        });
    }
    fill_failed(&mut diag, &diagnostics.failed_nodes);

    let partition = trapezoid(&diag, grid.dx());
    if !(partition > 0.0 && partition.is_finite()) {
        return Err(Error::Domain(format!(
            "semiclassical partition function is {partition}"
        )));
    }
    Ok(SemiclassicalState {
        diag: MeshFunction::new(diag, MeshRole::Density),
        partition,
        paths,
        fluct,
        diagnostics,
    })
}

/// Replaces values at failed nodes by linear interpolation between the
/// nearest good nodes (constant extension at the ends).
fn fill_failed(values: &mut [f64], failed: &[usize]) {
    if failed.is_empty() {
        return;
    }
    let n = values.len();
    let mut bad = vec![false; n];
    for &j in failed {
        bad[j] = true;
    }
    let good: Vec<usize> = (0..n).filter(|&j| !bad[j]).collect();
    for &j in failed {
        let left = good.iter().rev().find(|&&g| g < j).copied();
        let right = good.iter().find(|&&g| g > j).copied();
        values[j] = match (left, right) {
            (Some(l), Some(r)) => {
                let t = (j - l) as f64 / (r - l) as f64;
                values[l] + t * (values[r] - values[l])
            }
            (Some(l), None) => values[l],
            (None, Some(r)) => values[r],
            (None, None) => values[j],
        };
    }
}

/// Semiclassical partition function from a full node sweep.
pub fn semiclassical_partition(
    v: &PotentialField,
    grid: &Grid,
    params: &PhysicsParams,
    config: &PathSolverConfig,
) -> Result<SemiclassicalState> {
    semiclassical_sweep(v, grid, params, config, None)
}

/// Partition function from the single stationary end point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryPartition {
    pub x0: f64,
    pub node: usize,
    pub partition: f64,
    /// `x0` is the first or last mesh node.
    pub at_edge: bool,
}

/// Laplace approximation of `int dx A_x exp(-S_x/hbar)` around the node with
/// the smallest action. `S''` comes from a least-squares parabola over the
/// nodes with `S_x - S_min <= 2 hbar` (at least one node on each side), the
/// range the Gaussian integral actually samples.
pub fn stationary_from_sweep(
    state: &SemiclassicalState,
    grid: &Grid,
    params: &PhysicsParams,
) -> Result<StationaryPartition> {
    let n_x = grid.n_x();
    let actions: Vec<f64> = state.paths.iter().map(|p| p.action).collect();
    let node = (0..n_x)
        .filter(|j| state.paths[*j].converged)
        .min_by(|&a, &b| actions[a].total_cmp(&actions[b]))
        .ok_or_else(|| Error::NoStationaryPoint("no converged paths".into()))?;
    let at_edge = node == 0 || node == n_x - 1;
    let hbar = params.hbar;
    let c = node.clamp(1, n_x - 2);
    let window = 2.0 * hbar;
    let mut lo = c - 1;
    while lo > 0 && actions[lo - 1] - actions[node] <= window {
        lo -= 1;
    }
    let mut hi = c + 1;
    while hi < n_x - 1 && actions[hi + 1] - actions[node] <= window {
        hi += 1;
    }
    let s2 = 2.0 * parabola_curvature(grid, &actions, lo, hi, grid.x(c));
    if !(s2 > 0.0) {
        return Err(Error::NoStationaryPoint(format!(
            "action is not convex at node {node} (curvature {s2:.3e})"
        )));
    }
    let partition =
        state.fluct[node].prefactor * (-actions[node] / hbar).exp() * (2.0 * std::f64::consts::PI * hbar / s2).sqrt();
    Ok(StationaryPartition {
        x0: grid.x(node),
        node,
        partition,
        at_edge,
    })
}

/// Quadratic coefficient of the least-squares parabola through
/// `(x_j, s_j)`, `j = lo..=hi`, centred at `x0`.
fn parabola_curvature(grid: &Grid, s: &[f64], lo: usize, hi: usize, x0: f64) -> f64 {
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut aty = nalgebra::Vector3::<f64>::zeros();
    for (j, &sj) in s.iter().enumerate().take(hi + 1).skip(lo) {
        let d = grid.x(j) - x0;
        let row = nalgebra::Vector3::new(1.0, d, d * d);
        ata += row * row.transpose();
        aty += row * sj;
    }
    ata.lu().solve(&aty).map_or(f64::NAN, |c| c[2])
}

pub fn stationary_partition(
    v: &PotentialField,
    grid: &Grid,
    params: &PhysicsParams,
    config: &PathSolverConfig,
) -> Result<StationaryPartition> {
    let state = semiclassical_sweep(v, grid, params, config, None)?;
    stationary_from_sweep(&state, grid, params)
}

/// Normalized Boltzmann density `exp(-beta v)/int exp(-beta v)`.
pub fn classical_density(v: &PotentialField, grid: &Grid, params: &PhysicsParams) -> MeshFunction {
    let vmin = v.values().iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = v.values().iter().map(|x| (-params.beta * (x - vmin)).exp()).collect();
    let z = trapezoid(&w, grid.dx());
    MeshFunction::new(w.iter().map(|x| x / z).collect(), MeshRole::Density)
}

/// `-(1/hbar) * occupation / dx`: the static-path logarithmic derivative.
pub fn log_deriv_approach1(path: &ClassicalPath, grid: &Grid, params: &PhysicsParams) -> MeshFunction {
    let h = occupation_histogram(path, grid);
    let s = -1.0 / (params.hbar * grid.dx());
    MeshFunction::new(h.values.iter().map(|x| s * x).collect(), MeshRole::Derivative)
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Probability mass of `N(mean, sigma^2)` in `[lo, hi]`.
fn gaussian_mass(mean: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo - mean) / sigma;
    let b = (hi - mean) / sigma;
    // evaluate on the side of the smaller tail to keep precision
    if a > 0.0 {
        normal_cdf(-a) - normal_cdf(-b)
    } else {
        normal_cdf(b) - normal_cdf(a)
    }
}

/// Gaussian-smeared occupation: every slice contributes a normalized
/// Gaussian with mean `q_k` and variance `hbar R_kk`, integrated over the mesh
/// cells (end cells take the tails). Slices with zero variance are point
/// masses. The mesh mass is exactly `-beta`.
pub fn log_deriv_approach2(
    path: &ClassicalPath,
    fluct: &FluctuationData,
    grid: &Grid,
    params: &PhysicsParams,
) -> Result<MeshFunction> {
    let n = path.n_steps();
    if fluct.r_diag.len() != n + 1 {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            found: fluct.r_diag.len(),
        });
    }
    let n_x = grid.n_x();
    let dx = grid.dx();
    let mut out = vec![0.0; n_x];
    for k in 1..=n {
        let q = path.q[k];
        let r = fluct.r_diag[k];
        if r < 0.0 {
            return Err(Error::Domain(format!("negative fluctuation variance at slice {k}")));
        }
        let sigma = (params.hbar * r).sqrt();
        if sigma == 0.0 || sigma < 1e-300 {
            out[grid.nearest_node(q)] += 1.0;
            continue;
        }
        // only cells within a few widths carry mass; the tails go to the end cells
        let reach = 40.0 * sigma;
        let lo_node = grid.nearest_node(q - reach);
        let hi_node = grid.nearest_node(q + reach);
        for (j, o) in out.iter_mut().enumerate().take(hi_node + 1).skip(lo_node) {
            let xj = grid.x(j);
            let lo = if j == 0 { f64::NEG_INFINITY } else { xj - 0.5 * dx };
            let hi = if j == n_x - 1 { f64::INFINITY } else { xj + 0.5 * dx };
            let lo = if j == lo_node { f64::NEG_INFINITY } else { lo };
            let hi = if j == hi_node { f64::INFINITY } else { hi };
            *o += gaussian_mass(q, sigma, lo, hi);
        }
    }
    let s = -grid.eps() / (params.hbar * dx);
    Ok(MeshFunction::new(
        out.iter().map(|x| s * x).collect(),
        MeshRole::Derivative,
    ))
}

/// Derivative of the lattice van Vleck element `ln(A_x exp(-S_x/hbar))` with
/// respect to the nodal potential values, per unit length.
///
/// The explicit part is the occupation of the action in the interpolation
/// basis plus `-(eps/2) sum_k R_kk dv''(q_k)/dv_j` from the prefactor. The
/// path moves with `v` as `dq/dv_j = -H^{-1} dF/dv_j`; its effect on the
/// action (nonzero because the solver's continuous force is not the segment
/// slope) and on the prefactor curvature enters through one adjoint solve.
pub fn log_deriv_lattice(
    path: &ClassicalPath,
    fluct: &FluctuationData,
    v: &PotentialField,
    grid: &Grid,
    params: &PhysicsParams,
) -> Result<MeshFunction> {
    v.check_grid(grid)?;
    let n = path.n_steps();
    if fluct.r_diag.len() != n + 1 {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            found: fluct.r_diag.len(),
        });
    }
    let (eps, mass, hbar) = (grid.eps(), params.mass, params.hbar);
    let pot = v.on(grid);
    let q = &path.q;
    let mut out = vec![0.0; grid.n_x()];

    // d ln rho / dq_k at fixed v, scaled by eps^2/m for the solve against J
    let mut rhs = vec![0.0; n.saturating_sub(1)];
    for k in 1..n {
        let seg = interp_potential_deriv(v, grid, q[k]).value;
        let ds_dq = eps * (seg - pot.slope(q[k]));
        let dlna_dq = -0.5 * eps * fluct.r_diag[k] * pot.fluctuation_curvature_slope(q[k]);
        rhs[k - 1] = (-ds_dq / hbar + dlna_dq) * eps * eps / mass;
    }
    let mu = if n > 1 {
        let c = jacobian_diagonal(&pot, q, eps, mass);
        let off = vec![-1.0; n - 1];
        solve_tridiagonal(&off, &c, &off, &rhs)?
    } else {
        Vec::new()
    };

    for k in 1..=n {
        for s in mesh_sensitivities(grid, q[k]) {
            out[s.node] -= eps / hbar * s.value;
            if k < n {
                out[s.node] -= mu[k - 1] * s.force + 0.5 * eps * fluct.r_diag[k] * s.fluct_curvature;
            }
        }
    }
    let dx = grid.dx();
    Ok(MeshFunction::new(
        out.into_iter().map(|x| x / dx).collect(),
        MeshRole::Derivative,
    ))
}

/// Derivative of `ln Z` for the trapezoid partition function of a sweep,
/// per unit length: `sum_x (w_x rho_x / Z) d ln rho_x / dv`.
pub fn lattice_log_partition_derivative(
    state: &SemiclassicalState,
    v: &PotentialField,
    grid: &Grid,
    params: &PhysicsParams,
) -> Result<MeshFunction> {
    let w = grid.weights();
    let parts = (0..grid.n_x())
        .into_par_iter()
        .map(|x| {
            let d = log_deriv_lattice(&state.paths[x], &state.fluct[x], v, grid, params)?;
            let weight = w[x] * state.diag.values[x] / state.partition;
            Ok(d.values.into_iter().map(|y| weight * y).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![0.0; grid.n_x()];
    for p in parts {
        for (o, y) in out.iter_mut().zip(p) {
            *o += y;
        }
    }
    Ok(MeshFunction::new(out, MeshRole::Derivative))
}

/// Result of the split-path evaluation at one `x'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitDerivative {
    /// `delta ln rho(x_i) / delta v(x')`.
    pub value: f64,
    /// Number of slices in the first leg at the stationary split.
    pub split: usize,
    /// Mean energies of the two legs at the split.
    pub energies: (f64, f64),
    /// Combined action `S_1 + S_2` at the split.
    pub action: f64,
}

/// Split-path logarithmic derivative at one mesh node `x'`.
///
/// Both legs `x_i -> x'` (`k` slices) and `x' -> x_i` (`n - k` slices) are
/// solved for every `k`; the stationary split minimizes `S_1 + S_2`, and the
/// imaginary-time integral is done by Laplace's method around it.
pub fn split_derivative<P: Potential + ?Sized>(
    pot: &P,
    closed: &ClassicalPath,
    closed_fluct: &FluctuationData,
    xprime: f64,
    eps: f64,
    params: &PhysicsParams,
    config: &PathSolverConfig,
) -> Result<SplitDerivative> {
    let n = closed.n_steps();
    let xi = closed.boundary_x;
    let mass = params.mass;
    let hbar = params.hbar;
    // solvers[s] handles legs of s slices; single-slice legs have no interior
    let solvers = (0..n)
        .map(|s| {
            if s >= 2 {
                PathSolver::new(s, eps, mass, *config).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let leg = |steps: usize, a: f64, b: f64| -> Result<(f64, f64, f64)> {
        match &solvers[steps] {
            Some(s) => {
                let path = s.solve_converged(pot, a, b, None)?;
                let f = fluctuation_data(pot, &path.q, eps, mass, hbar);
                Ok((path.action, f.prefactor, path.energy))
            }
            None => {
                let q = [a, b];
                Ok((
                    discrete_action(pot, &q, eps, mass),
                    (mass / (2.0 * std::f64::consts::PI * hbar * eps)).sqrt(),
                    discrete_energy(pot, &q, eps, mass).0,
                ))
            }
        }
    };
    // (S1 + S2, A1, A2, E1, E2) per split; index 0 unused
    type Split = (f64, f64, f64, f64, f64);
    let mut legs: Vec<Option<Split>> = vec![None];
    for k in 1..n {
        let first = leg(k, xi, xprime)?;
        let second = leg(n - k, xprime, xi)?;
        legs.push(Some((first.0 + second.0, first.1, second.1, first.2, second.2)));
    }
    let total = |k: usize| legs[k].map(|l| l.0).unwrap_or(f64::INFINITY);
    let best = (1..n)
        .min_by(|&a, &b| total(a).total_cmp(&total(b)))
        .ok_or_else(|| Error::NoStationaryPoint("too few time slices".into()))?;
    if best == 1 || best == n - 1 {
        return Err(Error::NoStationaryPoint(format!(
            "split action is minimal at the end of the time interval (x' = {xprime})"
        )));
    }
    let dbeta = eps / hbar;
    let s2 = (total(best + 1) - 2.0 * total(best) + total(best - 1)) / (dbeta * dbeta);
    if !(s2 > 0.0) {
        return Err(Error::NoStationaryPoint(format!(
            "split action not convex at x' = {xprime}"
        )));
    }
    let (s_tot, a1, a2, e1, e2) = legs[best].unwrap();
    let a_beta = (2.0 * std::f64::consts::PI * hbar / s2).sqrt();
    let value = -(a_beta * a1 * a2 / closed_fluct.prefactor) * (-(s_tot - closed.action) / hbar).exp();
    Ok(SplitDerivative {
        value,
        split: best,
        energies: (e1, e2),
        action: s_tot,
    })
}

/// Split-path logarithmic derivative of `rho(x_i)` at mesh node
/// `xprime_index`, in the mesh potential.
pub fn log_deriv_approach3(
    v: &PotentialField,
    grid: &Grid,
    params: &PhysicsParams,
    xi: f64,
    xprime_index: usize,
    config: &PathSolverConfig,
) -> Result<SplitDerivative> {
    v.check_grid(grid)?;
    if xprime_index >= grid.n_x() {
        return Err(Error::Domain(format!("node {xprime_index} outside the mesh")));
    }
    let pot = v.on(grid);
    let solver = PathSolver::for_grid(grid, params, *config)?;
    let closed = solver.solve_converged(&pot, xi, xi, None)?;
    let fluct = fluctuation_data(&pot, &closed.q, grid.eps(), params.mass, params.hbar);
    split_derivative(&pot, &closed, &fluct, grid.x(xprime_index), grid.eps(), params, config)
}

/// Split-path logarithmic derivative at every mesh node.
pub fn approach3_profile(
    v: &PotentialField,
    grid: &Grid,
    params: &PhysicsParams,
    closed: &ClassicalPath,
    closed_fluct: &FluctuationData,
    config: &PathSolverConfig,
) -> Result<MeshFunction> {
    let pot = v.on(grid);
    let values = (0..grid.n_x())
        .into_par_iter()
        .map(|j| split_derivative(&pot, closed, closed_fluct, grid.x(j), grid.eps(), params, config).map(|d| d.value))
        .collect::<Result<Vec<f64>>>()?;
    Ok(MeshFunction::new(values, MeshRole::Derivative))
}
