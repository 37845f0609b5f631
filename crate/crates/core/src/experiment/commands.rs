//! The `likelihood`, `sample` and `reconstruct` runs behind the command line.

use std::path::Path;
use std::time::Instant;

use serde_json::json;

use crate::error::Result;
use crate::experiment::config::RunConfig;
use crate::experiment::output::{
    write_dataset_csv, write_density_csv, write_paths_csv, write_potential_csv, write_trace_csv, PathRow, RunManifest,
};
use crate::experiment::sampling::{empirical_frequencies, sample_dataset};
use crate::experiment::verify::interior_minima;
use crate::model::{Grid, MeshFunction, MeshRole, PhysicsParams, PotentialField};
use crate::reconstruction::{ergodic_diagnostic, map_descent};
use crate::semiclassical::{classical_density, semiclassical_partition};
use crate::spectral::exact_density;

fn manifest(command: &str, cfg: &RunConfig, started: Instant, files: &[&str]) -> Result<RunManifest> {
    Ok(RunManifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: serde_json::to_value(cfg)?,
        seconds: started.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        files: files.iter().map(|s| s.to_string()).collect(),
        summary: serde_json::Value::Null,
        warnings: Vec::new(),
    })
}

/// Classical, semiclassical and exact densities of the truth potential, with
/// the per-node path summary.
pub fn run_likelihood(cfg: &RunConfig, out: &Path) -> Result<RunManifest> {
    let t = Instant::now();
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let v = cfg.truth(&grid)?;
    let classical = classical_density(&v, &grid, &params);
    let sc = semiclassical_partition(&v, &grid, &params, &cfg.path_config())?;
    let exact = exact_density(&v, &grid, &params)?;

    std::fs::create_dir_all(out)?;
    write_potential_csv(&out.join("potential.csv"), &grid, &v)?;
    write_density_csv(
        &out.join("densities.csv"),
        &grid,
        &[
            ("classical", &classical.values),
            ("semiclassical", &sc.normalized().values),
            ("exact", &exact.values),
        ],
    )?;
    let rows: Vec<PathRow> = sc
        .paths
        .iter()
        .zip(&sc.fluct)
        .map(|(p, f)| PathRow {
            x: p.boundary_x,
            action: p.action,
            energy: p.energy,
            energy_drift: p.energy_drift,
            prefactor: f.prefactor,
            fluctuations_valid: f.valid,
            converged: p.converged,
            iterations: p.iterations,
            clamped: p.clamped,
        })
        .collect();
    write_paths_csv(&out.join("paths.csv"), &rows)?;

    let mut m = manifest("likelihood", cfg, t, &["potential.csv", "densities.csv", "paths.csv"])?;
    m.summary = json!({
        "semiclassical_partition": sc.partition,
        "sweep": sc.diagnostics,
    });
    if !sc.diagnostics.failed_nodes.is_empty() {
        m.warnings.push(format!(
            "paths at nodes {:?} did not converge; their densities are interpolated",
            sc.diagnostics.failed_nodes
        ));
    }
    m.seconds = t.elapsed().as_secs_f64();
    m.write(out)?;
    Ok(m)
}

/// Draws the dataset from the exact density of the truth potential.
pub fn run_sample(cfg: &RunConfig, out: &Path) -> Result<RunManifest> {
    let t = Instant::now();
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let truth = cfg.truth(&grid)?;
    let data = sample_dataset(&truth, &grid, &params, cfg.sampling.n, cfg.sampling.seed)?;
    std::fs::create_dir_all(out)?;
    write_dataset_csv(&out.join("dataset.csv"), &grid, &data)?;
    let mut m = manifest("sample", cfg, t, &["dataset.csv"])?;
    m.summary = json!({ "n": data.len(), "seed": cfg.sampling.seed, "nodes": data.nodes });
    m.seconds = t.elapsed().as_secs_f64();
    m.write(out)?;
    Ok(m)
}

/// Density of `v` under every backend; a failing semiclassical sweep gives a
/// column of NaN and a warning instead of an error.
fn backend_densities(
    v: &PotentialField,
    grid: &Grid,
    params: &PhysicsParams,
    cfg: &RunConfig,
    warnings: &mut Vec<String>,
) -> Result<[MeshFunction; 3]> {
    let classical = classical_density(v, grid, params);
    let sc = match semiclassical_partition(v, grid, params, &cfg.path_config()) {
        Ok(s) => s.normalized(),
        Err(e) => {
            warnings.push(format!("semiclassical density unavailable: {e}"));
            MeshFunction::new(vec![f64::NAN; grid.n_x()], MeshRole::Density)
        }
    };
    Ok([classical, sc, exact_density(v, grid, params)?])
}

/// Samples the data, runs the descent and writes the plot data.
pub fn run_reconstruct(cfg: &RunConfig, out: &Path) -> Result<RunManifest> {
    let t = Instant::now();
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let truth = cfg.truth(&grid)?;
    let data = sample_dataset(&truth, &grid, &params, cfg.sampling.n, cfg.sampling.seed)?;
    let prior = cfg.prior(&grid)?;
    let rc = cfg.reconstruction_config();
    let init = cfg.initial_potential(&grid)?;
    let state = map_descent(&init, &data, &grid, &params, &prior, &rc)?;

    let mut warnings = Vec::new();
    let [c, s, e] = backend_densities(&state.v, &grid, &params, cfg, &mut warnings)?;
    let freq = empirical_frequencies(&data, grid.n_x());

    std::fs::create_dir_all(out)?;
    write_potential_csv(&out.join("truth_potential.csv"), &grid, &truth)?;
    write_potential_csv(&out.join("reconstructed_potential.csv"), &grid, &state.v)?;
    write_density_csv(
        &out.join("densities.csv"),
        &grid,
        &[
            ("classical", &c.values),
            ("semiclassical", &s.values),
            ("exact", &e.values),
            ("empirical", &freq),
        ],
    )?;
    write_dataset_csv(&out.join("dataset.csv"), &grid, &data)?;
    write_trace_csv(&out.join("trace.csv"), &state.energy_trace, &state.grad_trace)?;

    if !state.converged {
        warnings.push(format!(
            "descent did not converge: residual {:.3e} above {:.1e} after {} steps{}",
            state.grad_trace.last().copied().unwrap_or(f64::NAN),
            rc.grad_tol,
            state.outer_iter,
            if state.diagnostics.stalled {
                " (line search stalled)"
            } else {
                ""
            }
        ));
    }
    if !state.diagnostics.spike_nodes.is_empty() {
        warnings.push(format!("spike collapse at nodes {:?}", state.diagnostics.spike_nodes));
    }
    let ones = MeshFunction::new(vec![1.0; grid.n_x()], MeshRole::Derivative);
    let xs = MeshFunction::new(grid.nodes().collect(), MeshRole::Derivative);
    let ergodic = [ones, xs]
        .iter()
        .map(|f| ergodic_diagnostic(&state, &data, &grid, &params, &prior, f))
        .collect::<Result<Vec<_>>>()?;

    let mut m = manifest(
        "reconstruct",
        cfg,
        t,
        &[
            "truth_potential.csv",
            "reconstructed_potential.csv",
            "densities.csv",
            "dataset.csv",
            "trace.csv",
        ],
    )?;
    m.summary = json!({
        "converged": state.converged,
        "outer_iterations": state.outer_iter,
        "final_energy": state.energy_trace.last(),
        "final_grad_norm": state.grad_trace.last(),
        "interior_minima": interior_minima(state.v.values()),
        "data_nodes": data.nodes,
        "likelihood_backend": rc.likelihood_backend,
        "deriv_backend": rc.deriv_backend,
        "diagnostics": state.diagnostics,
        "ergodic_balance": { "f_one": ergodic[0], "f_x": ergodic[1] },
    });
    m.warnings = warnings;
    m.seconds = t.elapsed().as_secs_f64();
    m.write(out)?;
    Ok(m)
}
