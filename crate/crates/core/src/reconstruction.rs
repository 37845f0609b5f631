//! Maximum-posterior reconstruction of the potential.
//!
//! The objective is
//! `E(v) = -sum_i ln(rho(x_i)/Z) + (gamma/2) (v - v0)^T K (v - v0)`
//! and its functional gradient (the stationarity residual) is
//! `-sum_i L_i - N beta rho_norm + (gamma/dx) K (v - v0)`, with `L_i` the
//! logarithmic derivative of `rho(x_i)` from the selected derivative backend.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Grid, MeshFunction, MeshRole, PhysicsParams, PotentialField};
use crate::paths::{ClassicalPath, PathSolverConfig};
use crate::prior::{prior_energy, prior_gradient, PriorModel};
use crate::semiclassical::{
    classical_density, lattice_log_partition_derivative, log_deriv_approach1, log_deriv_approach2, log_deriv_lattice,
    semiclassical_sweep, split_derivative, SemiclassicalState, SweepDiagnostics,
};
use crate::spectral::{boltzmann_diagonal, exact_log_derivative, solve_spectrum, SpectralDecomposition, ThermalState};

/// Measured positions, each snapped to its nearest mesh node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    pub positions: Vec<f64>,
    pub nodes: Vec<usize>,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn new(positions: Vec<f64>, grid: &Grid, seed: Option<u64>) -> Result<Self> {
        let mut nodes = Vec::with_capacity(positions.len());
        for (i, &x) in positions.iter().enumerate() {
            if !grid.contains(x) {
                return Err(Error::Domain(format!("datum {i} at x = {x} lies outside the mesh")));
            }
            nodes.push(grid.nearest_node(x));
        }
        let positions = nodes.iter().map(|&j| grid.x(j)).collect();
        Ok(Self { positions, nodes, seed })
    }

    pub fn from_nodes(nodes: Vec<usize>, grid: &Grid, seed: Option<u64>) -> Result<Self> {
        if let Some(&bad) = nodes.iter().find(|&&j| j >= grid.n_x()) {
            return Err(Error::Domain(format!(
                "node {bad} outside mesh of {} nodes",
                grid.n_x()
            )));
        }
        let positions = nodes.iter().map(|&j| grid.x(j)).collect();
        Ok(Self { positions, nodes, seed })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of data at every node.
    pub fn counts(&self, n_x: usize) -> Vec<usize> {
        let mut c = vec![0; n_x];
        for &j in &self.nodes {
            c[j] += 1;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LikelihoodBackend {
    Classical,
    Semiclassical,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerivBackend {
    Approach1,
    Approach2,
    Approach3,
    /// Exact derivative of the lattice semiclassical density, prefactor
    /// included; makes the residual the true gradient of the semiclassical
    /// objective.
    Lattice,
    Exact,
}

impl LikelihoodBackend {
    /// Derivative backend that matches this likelihood by default.
    pub fn default_deriv(self) -> DerivBackend {
        match self {
            LikelihoodBackend::Exact => DerivBackend::Exact,
            _ => DerivBackend::Approach1,
        }
    }
}

/// Descent settings. `gamma` overrides the weight stored in the prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionConfig {
    pub gamma: f64,
    pub eta_v: f64,
    pub max_outer: usize,
    pub grad_tol: f64,
    pub likelihood_backend: LikelihoodBackend,
    pub deriv_backend: DerivBackend,
    pub path_config: PathSolverConfig,
    /// Keep the two end nodes at their initial values.
    pub freeze_boundary: bool,
    pub max_halvings: usize,
    /// Sufficient-decrease constant of the line search.
    pub armijo: f64,
    /// Discrete curvature above which a node is reported as a spike.
    pub spike_curvature: f64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            gamma: 5.0,
            eta_v: 1e-2,
            max_outer: 500,
            grad_tol: 1e-4,
            likelihood_backend: LikelihoodBackend::Semiclassical,
            deriv_backend: DerivBackend::Approach1,
            path_config: PathSolverConfig::default(),
            freeze_boundary: false,
            max_halvings: 20,
            armijo: 1e-4,
            spike_curvature: 2.0,
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::Config(format!("gamma must be nonnegative, got {}", self.gamma)));
        }
        if !(self.eta_v > 0.0 && self.eta_v.is_finite()) {
            return Err(Error::Config(format!("eta_v must be positive, got {}", self.eta_v)));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config(format!(
                "grad_tol must be positive, got {}",
                self.grad_tol
            )));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::Config(format!(
                "armijo constant must lie in (0, 1), got {}",
                self.armijo
            )));
        }
        use DerivBackend as D;
        use LikelihoodBackend as L;
        match (self.likelihood_backend, self.deriv_backend) {
            (_, D::Exact) | (L::Semiclassical, _) | (L::Classical, D::Approach1) => {}
            (l, d) => {
                return Err(Error::Config(format!(
                    "derivative backend {d:?} needs semiclassical path solutions, likelihood backend is {l:?}"
                )))
            }
        }
        self.path_config.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

/// Counters reported by a descent run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DescentDiagnostics {
    pub rejected_steps: usize,
    pub stalled: bool,
    pub final_step: f64,
    /// Data (or split nodes, for approach 3) that fell back to approach 1.
    pub deriv_fallbacks: usize,
    pub sweep: Option<SweepDiagnostics>,
    /// Interior nodes whose discrete curvature exceeds the spike threshold.
    pub spike_nodes: Vec<usize>,
}

/// Iterate of the descent with everything needed to continue or report it.
#[derive(Debug, Clone)]
pub struct ReconstructionState {
    pub v: PotentialField,
    /// Closed path through every datum (semiclassical likelihood only).
    pub paths: Vec<ClassicalPath>,
    pub residual: MeshFunction,
    /// `-sum_i L_i`.
    pub data_term: MeshFunction,
    /// Normalized density of the likelihood backend.
    pub density: MeshFunction,
    pub energy_trace: Vec<f64>,
    pub grad_trace: Vec<f64>,
    pub outer_iter: usize,
    pub converged: bool,
    pub diagnostics: DescentDiagnostics,
}

/// Likelihood backend evaluated at one potential.
enum Likelihood {
    Classical(MeshFunction),
    Semiclassical(Box<SemiclassicalState>),
    Exact {
        spec: Box<SpectralDecomposition>,
        thermal: ThermalState,
    },
}

impl Likelihood {
    fn evaluate(
        v: &PotentialField,
        grid: &Grid,
        params: &PhysicsParams,
        config: &ReconstructionConfig,
        warm: Option<&[ClassicalPath]>,
    ) -> Result<Self> {
        Ok(match config.likelihood_backend {
            LikelihoodBackend::Classical => Likelihood::Classical(classical_density(v, grid, params)),
            LikelihoodBackend::Semiclassical => {
                let warm = warm.filter(|w| w.len() == grid.n_x());
                Likelihood::Semiclassical(Box::new(semiclassical_sweep(
                    v,
                    grid,
                    params,
                    &config.path_config,
                    warm,
                )?))
            }
            LikelihoodBackend::Exact => {
                let spec = solve_spectrum(v, grid, params)?;
                let thermal = boltzmann_diagonal(&spec, params.beta);
                Likelihood::Exact {
                    spec: Box::new(spec),
                    thermal,
                }
            }
        })
    }

    fn density(&self) -> MeshFunction {
        match self {
            Likelihood::Classical(d) => d.clone(),
            Likelihood::Semiclassical(s) => s.normalized(),
            Likelihood::Exact { thermal, .. } => thermal.normalized(),
        }
    }

    fn sweep(&self) -> Option<&SemiclassicalState> {
        match self {
            Likelihood::Semiclassical(s) => Some(s),
            _ => None,
        }
    }

    /// `-sum_i ln(rho(x_i)/Z)`.
    fn negative_log_likelihood(&self, data: &Dataset) -> Result<f64> {
        let density = self.density();
        let failed = self
            .sweep()
            .map(|s| s.diagnostics.failed_nodes.as_slice())
            .unwrap_or(&[]);
        let mut total = 0.0;
        for (i, &j) in data.nodes.iter().enumerate() {
            if failed.contains(&j) {
                return Err(Error::Datum {
                    index: i,
                    node: j,
                    reason: "closed path did not converge".into(),
                });
            }
            let p = density.values[j];
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Datum {
                    index: i,
                    node: j,
                    reason: format!("likelihood is {p}"),
                });
            }
            total -= p.ln();
        }
        Ok(total)
    }
}

fn effective_prior(prior: &PriorModel, config: &ReconstructionConfig) -> Result<PriorModel> {
    if prior.gamma() == config.gamma {
        Ok(prior.clone())
    } else {
        prior.with_gamma(config.gamma)
    }
}

/// `E(v)`; the same backend supplies `rho(x_i)` and `Z`.
pub fn posterior_energy(
    v: &PotentialField,
    data: &Dataset,
    grid: &Grid,
    params: &PhysicsParams,
    prior: &PriorModel,
    config: &ReconstructionConfig,
) -> Result<f64> {
    energy_with_likelihood(v, data, grid, params, prior, config, None).map(|(e, _)| e)
}

fn energy_with_likelihood(
    v: &PotentialField,
    data: &Dataset,
    grid: &Grid,
    params: &PhysicsParams,
    prior: &PriorModel,
    config: &ReconstructionConfig,
    warm: Option<&[ClassicalPath]>,
) -> Result<(f64, Option<Likelihood>)> {
    v.check_grid(grid)?;
    let prior = effective_prior(prior, config)?;
    let reg = 0.5 * prior.gamma() * prior_energy(v, &prior)?;
    if data.is_empty() {
        return Ok((reg, None));
    }
    let lik = Likelihood::evaluate(v, grid, params, config, warm)?;
    Ok((lik.negative_log_likelihood(data)? + reg, Some(lik)))
}

/// Energy, residual and the pieces needed by the diagnostics at one `v`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub energy: f64,
    pub residual: MeshFunction,
    pub data_term: MeshFunction,
    pub density: MeshFunction,
    /// Mesh sweep paths (semiclassical likelihood only).
    pub sweep_paths: Vec<ClassicalPath>,
    pub sweep: Option<SweepDiagnostics>,
    pub deriv_fallbacks: usize,
}

/// Full evaluation of the objective and its stationarity residual.
pub fn evaluate(
    v: &PotentialField,
    data: &Dataset,
    grid: &Grid,
    params: &PhysicsParams,
    prior: &PriorModel,
    config: &ReconstructionConfig,
    warm: Option<&[ClassicalPath]>,
) -> Result<Evaluation> {
    config.validate()?;
    let (energy, lik) = energy_with_likelihood(v, data, grid, params, prior, config, warm)?;
    complete_evaluation(v, energy, lik, data, grid, params, prior, config)
}

/// Residual assembly once the likelihood at `v` is known.
#[allow(clippy::too_many_arguments)]
fn complete_evaluation(
    v: &PotentialField,
    energy: f64,
    lik: Option<Likelihood>,
    data: &Dataset,
    grid: &Grid,
    params: &PhysicsParams,
    prior: &PriorModel,
    config: &ReconstructionConfig,
) -> Result<Evaluation> {
    let n_x = grid.n_x();
    let dx = grid.dx();
    let prior = effective_prior(prior, config)?;
    let pg = prior_gradient(v, &prior)?;
    let mut residual: Vec<f64> = pg.values.iter().map(|k| prior.gamma() * k / dx).collect();

    let Some(lik) = lik else {
        return Ok(Evaluation {
            energy,
            residual: MeshFunction::new(residual, MeshRole::Residual),
            data_term: MeshFunction::new(vec![0.0; n_x], MeshRole::Derivative),
            density: MeshFunction::new(vec![0.0; n_x], MeshRole::Density),
            sweep_paths: Vec::new(),
            sweep: None,
            deriv_fallbacks: 0,
        });
    };

    let density = lik.density();
    let (data_term, fallbacks) = data_term(&lik, v, data, grid, params, config)?;
    let n = data.len() as f64;
    let log_z = match (&lik, config.deriv_backend) {
        (Likelihood::Semiclassical(s), DerivBackend::Lattice) => {
            lattice_log_partition_derivative(s, v, grid, params)?.values
        }
        _ => {
            // -beta rho_norm, with the trapezoid weights of Z (the exact density vanishes at the walls)
            let w = grid.weights();
            (0..n_x).map(|j| -params.beta * density.values[j] * w[j] / dx).collect()
        }
    };
    for j in 0..n_x {
        residual[j] += data_term[j] + n * log_z[j];
    }
    let (sweep_paths, sweep) = match lik {
        Likelihood::Semiclassical(s) => (s.paths, Some(s.diagnostics)),
        _ => (Vec::new(), None),
    };
    Ok(Evaluation {
        energy,
        residual: MeshFunction::new(residual, MeshRole::Residual),
        data_term: MeshFunction::new(data_term, MeshRole::Derivative),
        density,
        sweep_paths,
        sweep,
        deriv_fallbacks: fallbacks,
    })
}

/// `delta E / delta v` at `v`.
pub fn stationarity_residual(
    v: &PotentialField,
    data: &Dataset,
    grid: &Grid,
    params: &PhysicsParams,
    prior: &PriorModel,
    config: &ReconstructionConfig,
) -> Result<MeshFunction> {
    evaluate(v, data, grid, params, prior, config, None).map(|e| e.residual)
}

/// `-sum_i L_i`, evaluated once per distinct datum node.
fn data_term(
    lik: &Likelihood,
    v: &PotentialField,
    data: &Dataset,
    grid: &Grid,
    params: &PhysicsParams,
    config: &ReconstructionConfig,
) -> Result<(Vec<f64>, usize)> {
    let n_x = grid.n_x();
    let mut multiplicity: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (i, &j) in data.nodes.iter().enumerate() {
        multiplicity.entry(j).or_insert((0, i)).0 += 1;
    }
    let own_spectrum;
    let exact = match (config.deriv_backend, lik) {
        (DerivBackend::Exact, Likelihood::Exact { spec, thermal }) => Some((spec.as_ref(), thermal)),
        (DerivBackend::Exact, _) => {
            let spec = solve_spectrum(v, grid, params)?;
            let thermal = boltzmann_diagonal(&spec, params.beta);
            own_spectrum = (spec, thermal);
            Some((&own_spectrum.0, &own_spectrum.1))
        }
        _ => None,
    };
    let entries: Vec<(usize, (usize, usize))> = multiplicity.into_iter().collect();
    let per_node = entries
        .par_iter()
        .map(|&(node, (_, first))| {
            let wrap = |e: Error| Error::Datum {
                index: first,
                node,
                reason: e.to_string(),
            };
            log_derivative(lik, exact, v, node, grid, params, config).map_err(wrap)
        })
        .collect::<Result<Vec<(MeshFunction, usize)>>>()?;
    let mut out = vec![0.0; n_x];
    let mut fallbacks = 0;
    for ((_, (count, _)), (l, fb)) in entries.iter().zip(per_node) {
        fallbacks += fb * count;
        for (o, x) in out.iter_mut().zip(&l.values) {
            *o -= *count as f64 * x;
        }
    }
    Ok((out, fallbacks))
}

fn log_derivative(
    lik: &Likelihood,
    exact: Option<(&SpectralDecomposition, &ThermalState)>,
    v: &PotentialField,
    node: usize,
    grid: &Grid,
    params: &PhysicsParams,
    config: &ReconstructionConfig,
) -> Result<(MeshFunction, usize)> {
    if let Some((spec, thermal)) = exact {
        return Ok((exact_log_derivative(spec, thermal, node)?, 0));
    }
    let Some(sweep) = lik.sweep() else {
        // classical likelihood: the static path spends all of beta hbar at x_i
        let mut l = vec![0.0; grid.n_x()];
        l[node] = -params.beta / grid.dx();
        return Ok((MeshFunction::new(l, MeshRole::Derivative), 0));
    };
    let path = &sweep.paths[node];
    let fluct = &sweep.fluct[node];
    let a1 = log_deriv_approach1(path, grid, params);
    match config.deriv_backend {
        DerivBackend::Approach1 | DerivBackend::Exact => Ok((a1, 0)),
        DerivBackend::Lattice => Ok((log_deriv_lattice(path, fluct, v, grid, params)?, 0)),
        DerivBackend::Approach2 => {
            if fluct.valid {
                Ok((log_deriv_approach2(path, fluct, grid, params)?, 0))
            } else {
                Ok((a1, 1))
            }
        }
        DerivBackend::Approach3 => {
            let pot = v.on(grid);
            let mut values = Vec::with_capacity(grid.n_x());
            let mut fallbacks = 0;
            for j in 0..grid.n_x() {
                match split_derivative(&pot, path, fluct, grid.x(j), grid.eps(), params, &config.path_config) {
                    Ok(d) => values.push(d.value),
                    Err(Error::NoStationaryPoint(_) | Error::NonConvergence { .. }) => {
                        fallbacks += 1;
                        values.push(a1.values[j]);
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok((MeshFunction::new(values, MeshRole::Derivative), fallbacks))
        }
    }
}

fn sup_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn step(v: &PotentialField, residual: &[f64], eta: f64, freeze: bool) -> Result<PotentialField> {
    let n = residual.len();
    let vals = v
        .values()
        .iter()
        .zip(residual)
        .enumerate()
        .map(|(j, (x, r))| {
            if freeze && (j == 0 || j == n - 1) {
                *x
            } else {
                x - eta * r
            }
        })
        .collect();
    let out = PotentialField::new(vals)?;
    match v.reference() {
        Some(r) => out.with_reference(r.to_vec()),
        None => Ok(out),
    }
}

fn masked(residual: &[f64], freeze: bool) -> Vec<f64> {
    let n = residual.len();
    residual
        .iter()
        .enumerate()
        .map(|(j, &r)| if freeze && (j == 0 || j == n - 1) { 0.0 } else { r })
        .collect()
}

/// Interior nodes with `|v_{j+1} - 2 v_j + v_{j-1}| / dx^2 > threshold`.
pub fn spike_nodes(v: &PotentialField, grid: &Grid, threshold: f64) -> Vec<usize> {
    let vals = v.values();
    let dx2 = grid.dx() * grid.dx();
    (1..vals.len() - 1)
        .filter(|&j| ((vals[j + 1] - 2.0 * vals[j] + vals[j - 1]) / dx2).abs() > threshold)
        .collect()
}

/// Damped gradient descent `v <- v - eta residual` with a backtracking
/// (Armijo) line search on `E`. The step doubles after every accepted move
/// and halves on every rejection; all paths are warm-started from the last
/// accepted sweep.
pub fn map_descent(
    v_init: &PotentialField,
    data: &Dataset,
    grid: &Grid,
    params: &PhysicsParams,
    prior: &PriorModel,
    config: &ReconstructionConfig,
) -> Result<ReconstructionState> {
    config.validate()?;
    let mut v = v_init.clone();
    let mut eval = evaluate(&v, data, grid, params, prior, config, None)?;
    let mut diagnostics = DescentDiagnostics::default();
    let mut energy_trace = vec![eval.energy];
    let mut grad_trace = Vec::new();
    let mut eta = config.eta_v;
    let mut converged = false;
    let mut outer = 0;
    let dx = grid.dx();

    loop {
        let g = masked(&eval.residual.values, config.freeze_boundary);
        let gnorm = sup_norm(&g);
        grad_trace.push(gnorm);
        if gnorm <= config.grad_tol {
            converged = true;
            break;
        }
        if outer >= config.max_outer {
            break;
        }
        outer += 1;
        let slope = g.iter().map(|x| x * x).sum::<f64>() * dx;
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let trial = step(&v, &g, eta, false)?;
            match energy_with_likelihood(&trial, data, grid, params, prior, config, Some(&eval.sweep_paths)) {
                Ok((e, lik)) if e <= eval.energy - config.armijo * eta * slope && e < eval.energy => {
                    accepted = Some((trial, e, lik));
                    break;
                }
                // a failed trial (non-convergent sweep, vanishing density) counts as a rejection
                _ => {
                    diagnostics.rejected_steps += 1;
                    eta *= 0.5;
                }
            }
        }
        let Some((trial, e, lik)) = accepted else {
            diagnostics.stalled = true;
            break;
        };
        let next = complete_evaluation(&trial, e, lik, data, grid, params, prior, config)?;
        v = trial;
        eval = next;
        energy_trace.push(eval.energy);
        diagnostics.final_step = eta;
        eta *= 2.0;
    }

    diagnostics.deriv_fallbacks = eval.deriv_fallbacks;
    diagnostics.sweep = eval.sweep.clone();
    diagnostics.spike_nodes = spike_nodes(&v, grid, config.spike_curvature);
    let paths = if eval.sweep_paths.is_empty() {
        Vec::new()
    } else {
        data.nodes.iter().map(|&j| eval.sweep_paths[j].clone()).collect()
    };
    Ok(ReconstructionState {
        v,
        paths,
        residual: eval.residual,
        data_term: eval.data_term,
        density: eval.density,
        energy_trace,
        grad_trace,
        outer_iter: outer,
        converged,
        diagnostics,
    })
}

/// Terms of the time-average/thermal-average balance for an observable `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErgodicDiagnostic {
    /// `(1/(N beta)) int dx f (-sum_i L_i)`; for approach 1 the path time
    /// average `(1/(N beta hbar)) sum_i int dtau f(q_i)`.
    pub time_avg: f64,
    /// `int dx f rho_norm`.
    pub ensemble_avg: f64,
    /// `(gamma/(N beta)) sum_j f_j (K(v - v0))_j`.
    pub prior_term: f64,
}

impl ErgodicDiagnostic {
    /// `time_avg - ensemble_avg + prior_term`; zero at a stationary point.
    pub fn balance(&self) -> f64 {
        self.time_avg - self.ensemble_avg + self.prior_term
    }
}

/// Projects the stationarity residual of `state` onto `f`, divided by `N beta`.
pub fn ergodic_diagnostic(
    state: &ReconstructionState,
    data: &Dataset,
    grid: &Grid,
    params: &PhysicsParams,
    prior: &PriorModel,
    f: &MeshFunction,
) -> Result<ErgodicDiagnostic> {
    let n_x = grid.n_x();
    crate::error::check_len(n_x, f.len())?;
    if data.is_empty() {
        return Err(Error::Domain("ergodic diagnostic needs at least one datum".into()));
    }
    let nb = data.len() as f64 * params.beta;
    let dx = grid.dx();
    let w = grid.weights();
    let time_avg = (0..n_x)
        .map(|j| f.values[j] * state.data_term.values[j] * dx)
        .sum::<f64>()
        / nb;
    let ensemble_avg = (0..n_x)
        .map(|j| f.values[j] * state.density.values[j] * w[j])
        .sum::<f64>();
    let ku = prior_gradient(&state.v, prior)?;
    let prior_term = prior.gamma() * (0..n_x).map(|j| f.values[j] * ku.values[j]).sum::<f64>() / nb;
    Ok(ErgodicDiagnostic {
        time_avg,
        ensemble_avg,
        prior_term,
    })
}
