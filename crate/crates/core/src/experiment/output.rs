//! CSV and manifest writers.
//!
//! Every CSV starts with one `#` comment line giving the units of each
//! column, followed by the header row and the data. Numbers are written in
//! Rust's shortest round-trip form, so identical inputs give identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Grid, PotentialField};
use crate::reconstruction::Dataset;

fn write_csv(path: &Path, units: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut buf = format!("# units: {units}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
    }
    fs::write(path, buf)?;
    Ok(())
}

fn num(x: f64) -> String {
    x.to_string()
}

/// `x,value`.
pub fn write_potential_csv(path: &Path, grid: &Grid, v: &PotentialField) -> Result<()> {
    write_csv(
        path,
        "x [length, hbar = 1], value [energy]",
        &["x", "value"],
        v.values()
            .iter()
            .enumerate()
            .map(|(j, &val)| vec![num(grid.x(j)), num(val)]),
    )
}

/// Reads an `x,value` file and checks that its abscissae are the mesh nodes.
pub fn read_potential_csv(path: &Path, grid: &Grid) -> Result<PotentialField> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("{}: missing column '{name}'", path.display())))
    };
    let (cx, cv) = (col("x")?, col("value")?);
    let mut values = Vec::with_capacity(grid.n_x());
    for (j, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Config(format!("{}: bad number in row {}", path.display(), j + 1)))
        };
        let x = parse(cx)?;
        if j >= grid.n_x() || (x - grid.x(j)).abs() > 1e-9 * grid.dx() {
            return Err(Error::Config(format!(
                "{}: row {} at x = {x} is not mesh node {j}",
                path.display(),
                j + 1
            )));
        }
        values.push(parse(cv)?);
    }
    if values.len() != grid.n_x() {
        return Err(Error::Config(format!(
            "{}: {} rows for a mesh of {} nodes",
            path.display(),
            values.len(),
            grid.n_x()
        )));
    }
    PotentialField::new(values)
}

/// `x` followed by one column per named density.
pub fn write_density_csv(path: &Path, grid: &Grid, columns: &[(&str, &[f64])]) -> Result<()> {
    let mut header = vec!["x"];
    header.extend(columns.iter().map(|c| c.0));
    let units = if columns.iter().any(|c| c.0 == "empirical") {
        "x [length], densities [1/length], empirical [count/N per node]"
    } else {
        "x [length], densities [1/length]"
    };
    write_csv(
        path,
        units,
        &header,
        (0..grid.n_x()).map(|j| {
            let mut row = vec![num(grid.x(j))];
            row.extend(columns.iter().map(|c| num(c.1[j])));
            row
        }),
    )
}

/// `iter,energy,grad_norm`; row 0 is the starting point.
pub fn write_trace_csv(path: &Path, energy: &[f64], grad: &[f64]) -> Result<()> {
    write_csv(
        path,
        "iter [1], energy [1], grad_norm [1/(energy length)]",
        &["iter", "energy", "grad_norm"],
        energy
            .iter()
            .zip(grad)
            .enumerate()
            .map(|(k, (e, g))| vec![k.to_string(), num(*e), num(*g)]),
    )
}

/// `index,node,x`.
pub fn write_dataset_csv(path: &Path, grid: &Grid, data: &Dataset) -> Result<()> {
    write_csv(
        path,
        "index [1], node [1], x [length]",
        &["index", "node", "x"],
        data.nodes
            .iter()
            .enumerate()
            .map(|(i, &j)| vec![i.to_string(), j.to_string(), num(grid.x(j))]),
    )
}

/// Per-node path summary: `x,action,energy,energy_drift,prefactor,converged,iterations,clamped`.
pub struct PathRow {
    pub x: f64,
    pub action: f64,
    pub energy: f64,
    pub energy_drift: f64,
    pub prefactor: f64,
    pub fluctuations_valid: bool,
    pub converged: bool,
    pub iterations: usize,
    pub clamped: usize,
}

pub fn write_paths_csv(path: &Path, rows: &[PathRow]) -> Result<()> {
    write_csv(
        path,
        "x [length], action [hbar], energy [energy], energy_drift [energy], prefactor [1/length], flags [bool], counts [1]",
        &[
            "x",
            "action",
            "energy",
            "energy_drift",
            "prefactor",
            "fluctuations_valid",
            "converged",
            "iterations",
            "clamped",
        ],
        rows.iter().map(|r| {
            vec![
                num(r.x),
                num(r.action),
                num(r.energy),
                num(r.energy_drift),
                num(r.prefactor),
                r.fluctuations_valid.to_string(),
                r.converged.to_string(),
                r.iterations.to_string(),
                r.clamped.to_string(),
            ]
        }),
    )
}

/// Run summary written next to the CSVs as `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seconds: f64,
    pub threads: usize,
    pub files: Vec<String>,
    pub summary: serde_json::Value,
    pub warnings: Vec<String>,
}

impl RunManifest {
    /// Writes the manifest, after checking that every listed file exists.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        for f in &self.files {
            if !dir.join(f).is_file() {
                return Err(Error::Domain(format!("manifest lists missing file {f}")));
            }
        }
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }
}
