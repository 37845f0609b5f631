//! Oracle suite: analytic and finite-difference checks of every engine, plus
//! the slower density and reconstruction checks.
//!
//! Each check returns a [`Check`] rather than panicking, so callers can
//! print a table and decide what a failure means for them.

use std::time::Instant;

use rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::Result;
use crate::experiment::potentials::{builtin_potential, BuiltinPotential};
use crate::experiment::sampling::{sample_dataset, unit_uniform};
use crate::model::{build_grid, Constant, Grid, Harmonic, PhysicsParams, PotentialField};
use crate::paths::{solve_path, PathSolver, PathSolverConfig};
use crate::prior::PriorModel;
use crate::reconstruction::{
    map_descent, posterior_energy, stationarity_residual, DerivBackend, LikelihoodBackend, ReconstructionConfig,
};
use crate::semiclassical::{
    classical_density, fluctuation_data, green_function, log_deriv_approach1, log_deriv_approach2, path_element,
    semiclassical_partition, van_vleck_element,
};
use crate::spectral::{
    boltzmann_diagonal, drho_diag_dv, drho_diag_dv_betaintegral, dz_dv, exact_density, solve_spectrum,
};

/// Outcome of one oracle.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Check {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub limit_seconds: f64,
}

impl Check {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} {:<34} {:>8.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

type Outcome = Result<(bool, String)>;

fn timed(id: u8, name: &'static str, limit: f64, f: impl FnOnce() -> Outcome) -> Check {
    let t = Instant::now();
    let out = f();
    let seconds = t.elapsed().as_secs_f64();
    let (mut passed, mut detail) = out.unwrap_or_else(|e| (false, format!("error: {e}")));
    if seconds > limit {
        passed = false;
        detail = format!("{detail}; runtime {seconds:.1} s over the {limit} s budget");
    }
    Check {
        id,
        name,
        passed,
        detail,
        seconds,
        limit_seconds: limit,
    }
}

/// Criteria run by `verify`: the identities and analytic oracles.
pub const IDENTITY_CHECKS: [u8; 7] = [1, 2, 3, 4, 7, 8, 9];
/// Slower density and reconstruction checks.
pub const SLOW_CHECKS: [u8; 2] = [5, 6];

/// Runs one criterion by number. Criterion 10 needs the command line and is
/// not available here.
pub fn run_check(id: u8) -> Option<Check> {
    Some(match id {
        1 => timed(1, "partition derivative vs FD", 5.0, dz_identity),
        2 => timed(2, "eigensum vs beta-integral route", 5.0, route_equivalence),
        3 => timed(3, "residual vs FD of posterior", 30.0, gradient_consistency),
        4 => timed(4, "analytic propagators", 30.0, analytic_propagators),
        5 => timed(5, "density ordering and mass limit", 60.0, density_comparison),
        6 => timed(6, "double-well reconstruction", 600.0, double_well_reconstruction),
        7 => timed(7, "harmonic path and energy drift", 10.0, path_oracle),
        8 => timed(8, "fluctuation Green function", 5.0, green_oracle),
        9 => timed(9, "log-derivative mass", 5.0, log_derivative_mass),
        _ => return None,
    })
}

pub fn run_checks(ids: &[u8]) -> Vec<Check> {
    ids.iter().filter_map(|&id| run_check(id)).collect()
}

/// Deterministic random potential with entries uniform in `[-1/2, 1/2)`.
pub fn random_potential(grid: &Grid, seed: u64) -> PotentialField {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let vals = (0..grid.n_x()).map(|_| unit_uniform(&mut rng) - 0.5).collect();
    PotentialField::new(vals).expect("finite values")
}

/// Interior strict local minima.
pub fn interior_minima(v: &[f64]) -> Vec<usize> {
    (1..v.len().saturating_sub(1))
        .filter(|&j| v[j] < v[j - 1] && v[j] < v[j + 1])
        .collect()
}

/// Trapezoid mean and variance of a normalized mesh density.
pub fn variance(density: &[f64], grid: &Grid) -> f64 {
    let w = grid.weights();
    let mass: f64 = density.iter().zip(&w).map(|(d, w)| d * w).sum();
    let mean = (0..grid.n_x()).map(|j| grid.x(j) * density[j] * w[j]).sum::<f64>() / mass;
    (0..grid.n_x())
        .map(|j| (grid.x(j) - mean).powi(2) * density[j] * w[j])
        .sum::<f64>()
        / mass
}

/// Trapezoid L1 distance of two mesh functions.
pub fn l1_distance(a: &[f64], b: &[f64], grid: &Grid) -> f64 {
    grid.weights()
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * (x - y).abs())
        .sum()
}

const RANDOM_SEED: u64 = 2024;

fn small_mass_setup() -> Result<(Grid, PhysicsParams, PotentialField)> {
    let p = PhysicsParams::new(0.1, 6.0)?;
    let g = build_grid(30, 0.0, 29.0, 30, &p)?;
    let v = random_potential(&g, RANDOM_SEED);
    Ok((g, p, v))
}

fn dz_identity() -> Outcome {
    let (g, p, v) = small_mass_setup()?;
    let d = dz_dv(&solve_spectrum(&v, &g, &p)?, p.beta);
    let h = 1e-5;
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..g.n_x() {
        let z = |s: f64| -> Result<f64> {
            let mut vals = v.values().to_vec();
            vals[j] += s * h;
            let sp = solve_spectrum(&PotentialField::new(vals)?, &g, &p)?;
            Ok(boltzmann_diagonal(&sp, p.beta).partition)
        };
        // derivative per unit length: the mesh perturbation carries weight dx
        let fd = (z(1.0)? - z(-1.0)?) / (2.0 * h * g.dx());
        num += (d.values[j] - fd).powi(2);
        den += fd * fd;
    }
    let rel = (num / den).sqrt();
    Ok((rel < 1e-4, format!("relative L2 error {rel:.2e} (< 1e-4)")))
}

fn route_equivalence() -> Outcome {
    let (g, p, v) = small_mass_setup()?;
    let s = solve_spectrum(&v, &g, &p)?;
    let mut worst: f64 = 0.0;
    for i in 0..g.n_x() {
        let a = drho_diag_dv(&s, p.beta, i)?;
        let b = drho_diag_dv_betaintegral(&s, p.beta, i)?;
        for (x, y) in a.values.iter().zip(&b.values) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok((worst < 1e-10, format!("max discrepancy {worst:.2e} (< 1e-10)")))
}

struct DoubleWell {
    grid: Grid,
    params: PhysicsParams,
    data: crate::reconstruction::Dataset,
    prior: PriorModel,
}

fn double_well_setup(mass: f64, gamma: f64) -> Result<DoubleWell> {
    let params = PhysicsParams::new(mass, 10.0)?;
    let grid = build_grid(30, 0.0, 29.0, 30, &params)?;
    let truth = builtin_potential(BuiltinPotential::CosineWell, &grid)?;
    let data = sample_dataset(&truth, &grid, &params, 15, 42)?;
    let prior = PriorModel::new(&grid, gamma)?;
    Ok(DoubleWell {
        grid,
        params,
        data,
        prior,
    })
}

fn gradient_consistency() -> Outcome {
    let f = double_well_setup(1.0, 5.0)?;
    let cfg = ReconstructionConfig {
        gamma: 5.0,
        likelihood_backend: LikelihoodBackend::Exact,
        deriv_backend: DerivBackend::Exact,
        ..Default::default()
    };
    // truth plus a random perturbation, so that no component vanishes by symmetry
    let truth = builtin_potential(BuiltinPotential::CosineWell, &f.grid)?;
    let noise = random_potential(&f.grid, RANDOM_SEED + 1);
    let v = PotentialField::new(
        truth
            .values()
            .iter()
            .zip(noise.values())
            .map(|(a, b)| a + 0.2 * b)
            .collect(),
    )?;
    let r = stationarity_residual(&v, &f.data, &f.grid, &f.params, &f.prior, &cfg)?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for j in 0..f.grid.n_x() {
        let e = |s: f64| -> Result<f64> {
            let mut vals = v.values().to_vec();
            vals[j] += s * h;
            posterior_energy(&PotentialField::new(vals)?, &f.data, &f.grid, &f.params, &f.prior, &cfg)
        };
        let fd = (e(1.0)? - e(-1.0)?) / (2.0 * h * f.grid.dx());
        worst = worst.max((r.values[j] - fd).abs() / r.values[j].abs().max(1e-12));
    }
    Ok((
        worst < 1e-4,
        format!("max component relative error {worst:.2e} (< 1e-4)"),
    ))
}

fn mehler(x: f64, mass: f64, omega: f64, beta: f64) -> f64 {
    let pre = (mass * omega / (2.0 * std::f64::consts::PI * (beta * omega).sinh())).sqrt();
    pre * (-mass * omega * x * x * (0.5 * beta * omega).tanh()).exp()
}

fn analytic_propagators() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();

    // free particle in a wide box, interior half
    let p = PhysicsParams::new(1.0, 1.0)?;
    let g = build_grid(401, 0.0, 20.0, 40, &p)?;
    let free = (p.mass / (2.0 * std::f64::consts::PI * p.beta)).sqrt();
    let th = boltzmann_diagonal(&solve_spectrum(&PotentialField::zeros(401), &g, &p)?, p.beta);
    let worst = (100..=300)
        .map(|j| (th.rho_diag.values[j] / free - 1.0).abs())
        .fold(0.0, f64::max);
    ok &= worst < 0.02;
    notes.push(format!("free exact {worst:.1e}"));
    let (vv, _) = van_vleck_element(&PotentialField::zeros(401), &g, &p, 10.0, &PathSolverConfig::default())?;
    let e = (vv / free - 1.0).abs();
    ok &= e < 0.02;
    notes.push(format!("free van Vleck {e:.1e}"));

    // harmonic partition function, spectral and semiclassical
    let (omega, beta) = (1.0_f64, 2.0_f64);
    let z_exact = 1.0 / (2.0 * (0.5 * beta * omega).sinh());
    let p = PhysicsParams::new(1.0, beta)?;
    let g = build_grid(401, 0.0, 20.0, 40, &p)?;
    let v = PotentialField::from_fn(&g, |x| 0.5 * (x - 10.0).powi(2))?;
    let z = boltzmann_diagonal(&solve_spectrum(&v, &g, &p)?, beta).partition;
    let e = (z / z_exact - 1.0).abs();
    ok &= e < 0.01;
    notes.push(format!("Z exact {e:.1e}"));
    let g = build_grid(161, -8.0, 8.0, 60, &p)?;
    let v = PotentialField::from_fn(&g, |x| 0.5 * x * x)?;
    let z = semiclassical_partition(&v, &g, &p, &PathSolverConfig::default())?.partition;
    let e = (z / z_exact - 1.0).abs();
    ok &= e < 0.01;
    notes.push(format!("Z semiclassical {e:.1e}"));

    // van Vleck diagonal in the exactly quadratic potential
    let n = 200;
    let pot = Harmonic {
        mass: 1.0,
        omega,
        center: 0.0,
    };
    let eps = beta / n as f64;
    let solver = PathSolver::new(n, eps, 1.0, PathSolverConfig::default())?;
    let mut worst: f64 = 0.0;
    for x in [-2.0, -1.0, -0.3, 0.0, 0.5, 1.5] {
        let path = solver.solve_converged(&pot, x, x, None)?;
        let f = fluctuation_data(&pot, &path.q, eps, 1.0, 1.0);
        worst = worst.max((path_element(&path, &f, 1.0) / mehler(x, 1.0, omega, beta) - 1.0).abs());
    }
    ok &= worst < 0.005;
    notes.push(format!("van Vleck vs Mehler {worst:.1e}"));
    Ok((ok, format!("relative errors: {}", notes.join(", "))))
}

fn density_comparison() -> Outcome {
    let densities = |mass: f64| -> Result<(Grid, [Vec<f64>; 3])> {
        let p = PhysicsParams::new(mass, 6.0)?;
        let g = build_grid(30, 0.0, 29.0, 30, &p)?;
        let v = builtin_potential(BuiltinPotential::FermiWell, &g)?;
        let c = classical_density(&v, &g, &p).values;
        let s = semiclassical_partition(&v, &g, &p, &PathSolverConfig::default())?
            .normalized()
            .values;
        let e = exact_density(&v, &g, &p)?.values;
        Ok((g, [c, s, e]))
    };
    let (g, [c, s, e]) = densities(0.1)?;
    let (vc, vs, ve) = (variance(&c, &g), variance(&s, &g), variance(&e, &g));
    let ordered = vc <= vs && vs <= ve;
    let (g, [c, s, e]) = densities(1.0)?;
    let d = [
        l1_distance(&c, &s, &g),
        l1_distance(&c, &e, &g),
        l1_distance(&s, &e, &g),
    ];
    let close = d.iter().all(|&x| x < 0.05);
    Ok((
        ordered && close,
        format!(
            "m=0.1 variances classical {vc:.3} semiclassical {vs:.3} exact {ve:.3}; m=1 L1 c-s {:.3} c-e {:.3} s-e {:.3} (< 0.05)",
            d[0], d[1], d[2]
        ),
    ))
}

/// Outcome of one double-well reconstruction.
#[derive(Debug, Clone)]
pub struct ReconstructionSummary {
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub minima: Vec<usize>,
    pub monotone: bool,
}

/// Semiclassical double-well reconstruction with the lattice gradient.
pub fn double_well_run(mass: f64, gamma: f64) -> Result<ReconstructionSummary> {
    let f = double_well_setup(mass, gamma)?;
    let cfg = ReconstructionConfig {
        gamma,
        likelihood_backend: LikelihoodBackend::Semiclassical,
        deriv_backend: DerivBackend::Lattice,
        max_outer: 5000,
        ..Default::default()
    };
    let st = map_descent(
        &PotentialField::zeros(f.grid.n_x()),
        &f.data,
        &f.grid,
        &f.params,
        &f.prior,
        &cfg,
    )?;
    Ok(ReconstructionSummary {
        converged: st.converged,
        iterations: st.outer_iter,
        grad_norm: st.grad_trace.last().copied().unwrap_or(f64::NAN),
        minima: interior_minima(st.v.values()),
        monotone: st.energy_trace.windows(2).all(|w| w[1] <= w[0]),
    })
}

fn double_well_reconstruction() -> Outcome {
    let a = double_well_run(1.0, 5.0)?;
    let near = |m: &[usize], c: usize| m.iter().filter(|&&j| j.abs_diff(c) <= 2).count() == 1;
    let heavy = a.converged && a.monotone && a.minima.len() == 2 && near(&a.minima, 10) && near(&a.minima, 20);
    let b = double_well_run(0.05, 10.0)?;
    let light = b.minima.len() == 2;
    Ok((
        heavy && light,
        format!(
            "m=1: converged {} after {} steps (grad {:.2e}), minima {:?}, monotone {}; m=0.05: minima {:?}",
            a.converged, a.iterations, a.grad_norm, a.minima, a.monotone, b.minima
        ),
    ))
}

fn path_oracle() -> Outcome {
    let (beta, x) = (1.0, 1.0);
    let pot = Harmonic {
        mass: 1.0,
        omega: 1.0,
        center: 0.0,
    };
    // the residual carries m/eps^2, so 1e-9 bounds the path error near 1e-14
    let cfg = PathSolverConfig {
        tol: 1e-9,
        max_iter: 20000,
        ..Default::default()
    };
    let solve = |n: usize| PathSolver::new(n, beta / n as f64, 1.0, cfg)?.solve_converged(&pot, x, x, None);
    let p = solve(400)?;
    let eps = beta / 400.0;
    let err =
        p.q.iter()
            .enumerate()
            .map(|(k, q)| (q - x * (k as f64 * eps - 0.5 * beta).cosh() / (0.5 * beta).cosh()).abs())
            .fold(0.0, f64::max);
    let ratio = p.energy_drift / solve(800)?.energy_drift;
    Ok((
        err < 1e-6 && (3.5..=4.5).contains(&ratio),
        format!("L-inf error {err:.2e} (< 1e-6), drift ratio {ratio:.3} (3.5 to 4.5)"),
    ))
}

fn green_oracle() -> Outcome {
    let (n, eps, mass) = (40, 0.15, 0.7);
    let r = green_function(&Constant(0.0), &vec![2.0; n + 1], eps, mass)?;
    let period = n as f64 * eps;
    let mut worst: f64 = 0.0;
    let mut symmetric = true;
    for k in 0..=n {
        for l in 0..=n {
            let (lo, hi) = (k.min(l) as f64 * eps, k.max(l) as f64 * eps);
            worst = worst.max((r[(k, l)] - lo * (period - hi) / (mass * period)).abs());
            symmetric &= r[(k, l)] == r[(l, k)];
        }
    }
    let pot = Harmonic {
        mass: 1.0,
        omega: 1.3,
        center: 0.0,
    };
    let solver = PathSolver::new(50, 0.05, 1.0, PathSolverConfig::default())?;
    let path = solver.solve_converged(&pot, 0.8, 0.8, None)?;
    let rc = green_function(&pot, &path.q, 0.05, 1.0)?;
    let positive = (1..50).all(|k| (1..50).all(|l| rc[(k, l)] > 0.0));
    Ok((
        worst < 1e-8 && symmetric && positive,
        format!("free max error {worst:.1e} (< 1e-8), symmetric {symmetric}, positive on convex path {positive}"),
    ))
}

fn log_derivative_mass() -> Outcome {
    let beta = 3.0;
    let p = PhysicsParams::new(1.0, beta)?;
    let g = build_grid(81, -8.0, 8.0, 30, &p)?;
    let v = PotentialField::from_fn(&g, |x| 0.5 * x * x)?;
    let mut ok = true;
    let mut notes = Vec::new();
    for x in [0.0, 1.5, -2.5] {
        let path = solve_path(&v, &g, &p, x, &PathSolverConfig::default(), None)?;
        let f = fluctuation_data(&v.on(&g), &path.q, g.eps(), p.mass, p.hbar);
        let mass = |d: &[f64]| d.iter().sum::<f64>() * g.dx();
        let a1 = log_deriv_approach1(&path, &g, &p).values;
        let a2 = log_deriv_approach2(&path, &f, &g, &p)?.values;
        let e1 = (mass(&a1) + beta).abs() / beta;
        let e2 = (mass(&a2) + beta).abs() / beta;
        let mut tiny = f.clone();
        for r in &mut tiny.r_diag {
            *r *= 1e-6;
        }
        let a2t = log_deriv_approach2(&path, &tiny, &g, &p)?.values;
        let l1 = a1.iter().zip(&a2t).map(|(a, b)| (a - b).abs()).sum::<f64>() * g.dx();
        ok &= path.clamped == 0 && e1 < 1e-12 && e2 < 0.01 && l1 < 1e-3 * beta;
        notes.push(format!("x={x}: a1 {e1:.0e}, a2 {e2:.0e}, R->0 L1 {l1:.1e}"));
    }
    Ok((ok, notes.join("; ")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn helpers() {
        assert_eq!(interior_minima(&[0.0, -1.0, 0.0, -0.5, -0.5, 1.0]), vec![1]);
        let p = PhysicsParams::new(1.0, 1.0).unwrap();
        let g = build_grid(5, 0.0, 4.0, 2, &p).unwrap();
        let d = vec![0.0, 0.0, 1.0, 0.0, 0.0];
        assert_eq!(variance(&d, &g), 0.0);
        assert_eq!(l1_distance(&d, &[0.0; 5], &g), 1.0);
        assert_eq!(random_potential(&g, 3), random_potential(&g, 3));
    }

    #[test]
    fn fast_identities_pass() {
        for c in run_checks(&[1, 2, 8, 9]) {
            assert!(c.passed, "{}", c.line());
        }
    }
}
