//! Euclidean classical paths: the boundary-value problem `m q'' = v'(q)` on
//! the imaginary-time lattice, solved by the damped fixed-point iteration
//! `q <- q - eta (q - G(q))` with `G(q) = T^{-1}(boundary - (eps^2/m) v'(q))`.
//!
//! Closed paths (`q_0 = q_n = x`) give diagonal matrix elements; open paths
//! (`q_0 = a`, `q_n = b`) are used for mixed action derivatives and for split
//! paths.

use crate::error::{Error, Result};
use crate::linalg::{solve_tridiagonal, SecondDifference};
use crate::model::{Grid, MeshFunction, MeshRole, PhysicsParams, Potential, PotentialField};

/// Step control for the path iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSolverConfig {
    pub eta_q: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub backtracking: bool,
    /// Finish with damped Newton steps when the fixed-point iteration stalls.
    pub newton_fallback: bool,
}

impl Default for PathSolverConfig {
    fn default() -> Self {
        Self {
            eta_q: 1.0,
            max_iter: 5000,
            tol: 1e-8,
            backtracking: true,
            newton_fallback: true,
        }
    }
}

impl PathSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_q > 0.0 && self.eta_q <= 1.0) {
            return Err(Error::Domain(format!("eta_q must lie in (0, 1], got {}", self.eta_q)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Domain(format!(
                "path tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Domain("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// A lattice path `q_0..=q_n` with its action and energy bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalPath {
    pub q: Vec<f64>,
    /// `q_0`; for closed paths also `q_n`.
    pub boundary_x: f64,
    /// `q_n`.
    pub end_x: f64,
    pub action: f64,
    /// Mean of the midpoint energies.
    pub energy: f64,
    /// Largest deviation of a midpoint energy from the mean.
    pub energy_drift: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual_norm: f64,
    /// Number of slices that left the potential's range.
    pub clamped: usize,
}

impl ClassicalPath {
    pub fn n_steps(&self) -> usize {
        self.q.len() - 1
    }

    pub fn is_closed(&self) -> bool {
        self.boundary_x == self.end_x
    }
}

/// Straight line from `a` to `b` with `n` steps; constant for closed paths.
pub fn linear_path(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|k| {
            let t = k as f64 / n as f64;
            if k == n {
                b
            } else {
                a + t * (b - a)
            }
        })
        .collect()
}

/// Moves a solved path to new end points by adding the linear interpolant of
/// the end-point shifts; the warm start for neighbouring boundary values.
pub fn shifted_path(q: &[f64], a: f64, b: f64) -> Vec<f64> {
    let n = q.len() - 1;
    let da = a - q[0];
    let db = b - q[n];
    let mut out: Vec<f64> = q
        .iter()
        .enumerate()
        .map(|(k, &qk)| {
            let t = k as f64 / n as f64;
            qk + (1.0 - t) * da + t * db
        })
        .collect();
    out[0] = a;
    out[n] = b;
    out
}

/// Interior residual `(m/eps^2)(2 q_k - q_{k+1} - q_{k-1}) + v'(q_k)`,
/// `k = 1..n`; returns the max-norm.
fn residual_into<P: Potential + ?Sized>(pot: &P, q: &[f64], stiff: f64, out: &mut [f64]) -> f64 {
    let mut norm = 0.0_f64;
    for (i, r) in out.iter_mut().enumerate() {
        let k = i + 1;
        let val = stiff * (2.0 * q[k] - q[k + 1] - q[k - 1]) + pot.slope(q[k]);
        *r = val;
        norm = norm.max(val.abs());
    }
    if norm.is_nan() {
        f64::INFINITY
    } else {
        norm
    }
}

/// Stationarity residual of a lattice path at every interior slice.
pub fn path_residual<P: Potential + ?Sized>(pot: &P, q: &[f64], eps: f64, mass: f64) -> Vec<f64> {
    let mut out = vec![0.0; q.len().saturating_sub(2)];
    residual_into(pot, q, mass / (eps * eps), &mut out);
    out
}

/// Discrete Euclidean action `sum_{k=1}^n [m/(2 eps) (q_k - q_{k-1})^2 + eps v(q_k)]`.
pub fn discrete_action<P: Potential + ?Sized>(pot: &P, q: &[f64], eps: f64, mass: f64) -> f64 {
    let half = 0.5 * mass / eps;
    q.windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            half * d * d + eps * pot.value(w[1])
        })
        .sum()
}

/// Mean midpoint energy `m/2 ((q_k - q_{k-1})/eps)^2 - v(midpoint)` and the
/// largest deviation from it.
pub fn discrete_energy<P: Potential + ?Sized>(pot: &P, q: &[f64], eps: f64, mass: f64) -> (f64, f64) {
    let energies: Vec<f64> = q
        .windows(2)
        .map(|w| {
            let vel = (w[1] - w[0]) / eps;
            0.5 * mass * vel * vel - pot.value(0.5 * (w[0] + w[1]))
        })
        .collect();
    let mean = energies.iter().sum::<f64>() / energies.len() as f64;
    let drift = energies.iter().fold(0.0_f64, |m, e| m.max((e - mean).abs()));
    (mean, drift)
}

/// Reusable solver for a fixed number of time slices.
#[derive(Debug, Clone)]
pub struct PathSolver {
    n: usize,
    eps: f64,
    mass: f64,
    factor: SecondDifference,
    config: PathSolverConfig,
}

impl PathSolver {
    pub fn new(n_steps: usize, eps: f64, mass: f64, config: PathSolverConfig) -> Result<Self> {
        config.validate()?;
        if n_steps < 2 {
            return Err(Error::Domain(format!("paths need at least 2 steps, got {n_steps}")));
        }
        if !(eps > 0.0 && mass > 0.0) {
            return Err(Error::Domain("time step and mass must be positive".into()));
        }
        Ok(Self {
            n: n_steps,
            eps,
            mass,
            factor: SecondDifference::new(n_steps - 1),
            config,
        })
    }

    /// Closed-path solver on the grid's time lattice.
    pub fn for_grid(grid: &Grid, params: &PhysicsParams, config: PathSolverConfig) -> Result<Self> {
        Self::new(grid.n_tau(), grid.eps(), params.mass, config)
    }

    pub fn n_steps(&self) -> usize {
        self.n
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn config(&self) -> &PathSolverConfig {
        &self.config
    }

    /// Solves the open problem `q_0 = a`, `q_n = b`. The end points of
    /// `init` are overwritten. Non-convergence is reported through
    /// `converged = false`, not as an error.
    pub fn solve<P: Potential + ?Sized>(&self, pot: &P, a: f64, b: f64, init: Option<&[f64]>) -> Result<ClassicalPath> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Domain("path end points must be finite".into()));
        }
        let n = self.n;
        let mut q = match init {
            Some(init) => {
                if init.len() != n + 1 {
                    return Err(Error::DimensionMismatch {
                        expected: n + 1,
                        found: init.len(),
                    });
                }
                init.to_vec()
            }
            None => linear_path(a, b, n),
        };
        q[0] = a;
        q[n] = b;

        let cfg = self.config;
        let stiff = self.mass / (self.eps * self.eps);
        let mut r = vec![0.0; n - 1];
        let mut r_trial = vec![0.0; n - 1];
        let mut trial = q.clone();
        let mut norm = residual_into(pot, &q, stiff, &mut r);
        let mut eta = cfg.eta_q;
        let mut iterations = 0;
        let mut stalled = false;

        while norm > cfg.tol && iterations < cfg.max_iter {
            iterations += 1;
            let mut step: Vec<f64> = r.iter().map(|x| x / stiff).collect();
            self.factor.solve_in_place(&mut step);
            loop {
                for k in 1..n {
                    trial[k] = q[k] - eta * step[k - 1];
                }
                let trial_norm = residual_into(pot, &trial, stiff, &mut r_trial);
                if !cfg.backtracking || trial_norm <= norm {
                    if !trial_norm.is_finite() {
                        stalled = true;
                        break;
                    }
                    std::mem::swap(&mut q, &mut trial);
                    std::mem::swap(&mut r, &mut r_trial);
                    norm = trial_norm;
                    eta = cfg.eta_q;
                    break;
                }
                eta *= 0.5;
                if eta < 1e-12 {
                    stalled = true;
                    break;
                }
            }
            if stalled {
                break;
            }
        }

        if norm > cfg.tol && cfg.newton_fallback {
            let (nq, nn, it) = self.newton(pot, q, norm, cfg.max_iter);
            q = nq;
            norm = nn;
            iterations += it;
        }

        let action = discrete_action(pot, &q, self.eps, self.mass);
        let (energy, energy_drift) = discrete_energy(pot, &q, self.eps, self.mass);
        let clamped = q.iter().filter(|&&x| !pot.in_range(x)).count();
        Ok(ClassicalPath {
            boundary_x: a,
            end_x: b,
            action,
            energy,
            energy_drift,
            converged: norm <= cfg.tol,
            iterations,
            residual_norm: norm,
            clamped,
            q,
        })
    }

    /// Damped Newton iteration on the tridiagonal Jacobian
    /// `(m/eps^2) tridiag(-1, 2, -1) + diag(v''(q_k))`.
    fn newton<P: Potential + ?Sized>(
        &self,
        pot: &P,
        mut q: Vec<f64>,
        mut norm: f64,
        max_iter: usize,
    ) -> (Vec<f64>, f64, usize) {
        let n = self.n;
        let stiff = self.mass / (self.eps * self.eps);
        let mut r = vec![0.0; n - 1];
        let mut r_trial = vec![0.0; n - 1];
        residual_into(pot, &q, stiff, &mut r);
        let off = vec![-stiff; n - 1];
        let mut iterations = 0;
        while norm > self.config.tol && iterations < max_iter.min(200) {
            iterations += 1;
            let diag: Vec<f64> = (1..n).map(|k| 2.0 * stiff + pot.curvature(q[k])).collect();
            let Ok(step) = solve_tridiagonal(&off, &diag, &off, &r) else {
                break;
            };
            let mut eta = 1.0;
            let mut accepted = false;
            let mut trial = q.clone();
            while eta > 1e-6 {
                for k in 1..n {
                    trial[k] = q[k] - eta * step[k - 1];
                }
                let tn = residual_into(pot, &trial, stiff, &mut r_trial);
                if tn < norm {
                    q.copy_from_slice(&trial);
                    std::mem::swap(&mut r, &mut r_trial);
                    norm = tn;
                    accepted = true;
                    break;
                }
                eta *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        (q, norm, iterations)
    }

    /// Closed path `q_0 = q_n = x`.
    pub fn solve_closed<P: Potential + ?Sized>(&self, pot: &P, x: f64, init: Option<&[f64]>) -> Result<ClassicalPath> {
        self.solve(pot, x, x, init)
    }

    /// Like [`solve`](Self::solve) but turns non-convergence into an error.
    pub fn solve_converged<P: Potential + ?Sized>(
        &self,
        pot: &P,
        a: f64,
        b: f64,
        init: Option<&[f64]>,
    ) -> Result<ClassicalPath> {
        let path = self.solve(pot, a, b, init)?;
        if path.converged {
            Ok(path)
        } else {
            Err(Error::NonConvergence {
                start: a,
                end: b,
                iterations: path.iterations,
                residual: path.residual_norm,
            })
        }
    }

    /// `d^2 S(a, b) / da db` at `a = b = x`, by a four-point difference with
    /// step `delta` and one Richardson extrapolation against `delta / 2`.
    ///
    /// The kinetic term couples the two ends, while end-point potential terms
    /// cancel exactly in the mixed difference.
    pub fn mixed_action_derivative<P: Potential + ?Sized>(
        &self,
        pot: &P,
        x: f64,
        delta: f64,
        center: Option<&ClassicalPath>,
    ) -> Result<f64> {
        let owned;
        let center = match center {
            Some(c) => c,
            None => {
                owned = self.solve_converged(pot, x, x, None)?;
                &owned
            }
        };
        let mixed = |h: f64| -> Result<f64> {
            let mut s = [0.0; 4];
            for (slot, (da, db)) in s.iter_mut().zip([(h, h), (h, -h), (-h, h), (-h, -h)]) {
                let init = shifted_path(&center.q, x + da, x + db);
                *slot = self.solve_converged(pot, x + da, x + db, Some(&init))?.action;
            }
            Ok((s[0] - s[1] - s[2] + s[3]) / (4.0 * h * h))
        };
        let coarse = mixed(delta)?;
        let fine = mixed(0.5 * delta)?;
        Ok(fine + (fine - coarse) / 3.0)
    }
}

/// Closed classical path through mesh point `x` in the interpolated mesh
/// potential.
pub fn solve_path(
    v: &PotentialField,
    grid: &Grid,
    params: &PhysicsParams,
    x: f64,
    config: &PathSolverConfig,
    q_init: Option<&[f64]>,
) -> Result<ClassicalPath> {
    v.check_grid(grid)?;
    if !grid.contains(x) {
        return Err(Error::Domain(format!("boundary point {x} outside the mesh")));
    }
    PathSolver::for_grid(grid, params, *config)?.solve_closed(&v.on(grid), x, q_init)
}

/// Recomputes the discrete action of `path` and stores it.
pub fn path_action(path: &mut ClassicalPath, v: &PotentialField, grid: &Grid, params: &PhysicsParams) -> f64 {
    path.action = discrete_action(&v.on(grid), &path.q, grid.eps(), params.mass);
    path.action
}

/// Mean midpoint energy and its maximum drift along the path.
pub fn path_energy(path: &ClassicalPath, v: &PotentialField, grid: &Grid, params: &PhysicsParams) -> (f64, f64) {
    discrete_energy(&v.on(grid), &path.q, grid.eps(), params.mass)
}

/// Time spent in each mesh cell: `eps` per slice `j = 1..n`, binned by
/// rounding to the nearest node. Sums to `n * eps` exactly.
pub fn occupation_histogram(path: &ClassicalPath, grid: &Grid) -> MeshFunction {
    let mut h = vec![0.0; grid.n_x()];
    let mut counts = vec![0usize; grid.n_x()];
    for &q in &path.q[1..] {
        counts[grid.nearest_node(q)] += 1;
    }
    for (hj, c) in h.iter_mut().zip(counts) {
        *hj = c as f64 * grid.eps();
    }
    MeshFunction::new(h, MeshRole::Observable)
}

/// Mixed end-point derivative of the action at `a = b = x` with step
/// `dx / 4`; negative for confining potentials. Enters the van Vleck
/// prefactor as `sqrt(-S_ab / (2 pi hbar))`.
pub fn action_second_derivative(
    v: &PotentialField,
    grid: &Grid,
    params: &PhysicsParams,
    x: f64,
    config: &PathSolverConfig,
) -> Result<f64> {
    v.check_grid(grid)?;
    let solver = PathSolver::for_grid(grid, params, *config)?;
    solver.mixed_action_derivative(&v.on(grid), x, 0.25 * grid.dx(), None)
}
