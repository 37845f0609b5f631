//! Run configuration read from TOML.
//!
//! ```toml
//! [physics]
//! mass = 1.0
//! beta = 10.0
//!
//! [grid]
//! n_x = 30
//! x_min = 0.0
//! x_max = 29.0
//! n_tau = 30
//!
//! [truth]
//! potential = "cosine_well"
//!
//! [sampling]
//! n = 15
//! seed = 42
//!
//! [prior]
//! gamma = 5.0
//!
//! [reconstruction]
//! likelihood = "semiclassical"
//! deriv = "lattice"
//! ```
//!
//! Every section except `grid` and `physics` may be omitted. Unknown keys are
//! rejected. Relative file paths are resolved against the directory of the
//! config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::output::read_potential_csv;
use crate::experiment::potentials::{builtin_potential, BuiltinPotential};
use crate::model::{build_grid, Grid, PhysicsParams, PotentialField};
use crate::paths::PathSolverConfig;
use crate::prior::PriorModel;
use crate::reconstruction::{DerivBackend, LikelihoodBackend, ReconstructionConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    pub mass: f64,
    pub beta: f64,
    #[serde(default = "one")]
    pub hbar: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_x: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub n_tau: usize,
}

/// A potential given either by name or by a CSV file with columns `x,value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<BuiltinPotential>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl Default for PotentialSource {
    fn default() -> Self {
        Self {
            potential: Some(BuiltinPotential::Zero),
            file: None,
        }
    }
}

impl PotentialSource {
    fn named(p: BuiltinPotential) -> Self {
        Self {
            potential: Some(p),
            file: None,
        }
    }

    pub fn load(&self, grid: &Grid) -> Result<PotentialField> {
        match (&self.potential, &self.file) {
            (Some(p), None) => builtin_potential(*p, grid),
            (None, Some(f)) => read_potential_csv(f, grid),
            _ => Err(Error::Config("give exactly one of `potential` or `file`".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_n() -> usize {
    15
}

fn default_seed() -> u64 {
    42
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            n: default_n(),
            seed: default_seed(),
        }
    }
}

/// Kernel choice is fixed to the Dirichlet second difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// `v0`; zero by default.
    #[serde(default)]
    pub reference: PotentialSource,
}

fn default_gamma() -> f64 {
    5.0
}

impl Default for PriorSection {
    fn default() -> Self {
        Self {
            gamma: default_gamma(),
            reference: PotentialSource::default(),
        }
    }
}

/// Where the descent starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialPotential {
    #[default]
    Reference,
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructionSection {
    pub likelihood: LikelihoodBackend,
    /// Defaults to the pairing of the likelihood backend.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deriv: Option<DerivBackend>,
    pub eta_v: f64,
    pub max_outer: usize,
    pub grad_tol: f64,
    pub freeze_boundary: bool,
    pub max_halvings: usize,
    pub armijo: f64,
    pub spike_curvature: f64,
    pub init: InitialPotential,
}

impl Default for ReconstructionSection {
    fn default() -> Self {
        let d = ReconstructionConfig::default();
        Self {
            likelihood: d.likelihood_backend,
            deriv: None,
            eta_v: d.eta_v,
            max_outer: d.max_outer,
            grad_tol: d.grad_tol,
            freeze_boundary: d.freeze_boundary,
            max_halvings: d.max_halvings,
            armijo: d.armijo,
            spike_curvature: d.spike_curvature,
            init: InitialPotential::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathSection {
    pub eta_q: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub backtracking: bool,
    pub newton_fallback: bool,
}

impl Default for PathSection {
    fn default() -> Self {
        let d = PathSolverConfig::default();
        Self {
            eta_q: d.eta_q,
            max_iter: d.max_iter,
            tol: d.tol,
            backtracking: d.backtracking,
            newton_fallback: d.newton_fallback,
        }
    }
}

impl From<&PathSection> for PathSolverConfig {
    fn from(p: &PathSection) -> Self {
        PathSolverConfig {
            eta_q: p.eta_q,
            max_iter: p.max_iter,
            tol: p.tol,
            backtracking: p.backtracking,
            newton_fallback: p.newton_fallback,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub physics: PhysicsSection,
    pub grid: GridSection,
    #[serde(default = "default_truth")]
    pub truth: PotentialSource,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub reconstruction: ReconstructionSection,
    #[serde(default)]
    pub paths: PathSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_truth() -> PotentialSource {
    PotentialSource::named(BuiltinPotential::CosineWell)
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s)?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads a config file; relative file references become relative to
    /// the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for src in [&mut cfg.truth, &mut cfg.prior.reference] {
            if let Some(f) = &mut src.file {
                if f.is_relative() {
                    *f = base.join(&*f);
                }
                if !f.exists() {
                    return Err(Error::Config(format!("referenced file {} does not exist", f.display())));
                }
            }
        }
        if let Some(d) = &mut cfg.output.dir {
            if d.is_relative() {
                *d = base.join(&*d);
            }
        }
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        self.params().map_err(|e| Error::Config(e.to_string()))?;
        self.grid().map_err(|e| Error::Config(e.to_string()))?;
        self.reconstruction_config().validate()?;
        if self.sampling.n == 0 {
            return Err(Error::Config("sampling.n must be at least 1".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<PhysicsParams> {
        PhysicsParams::with_hbar(self.physics.mass, self.physics.beta, self.physics.hbar)
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = &self.grid;
        build_grid(g.n_x, g.x_min, g.x_max, g.n_tau, &self.params()?)
    }

    pub fn path_config(&self) -> PathSolverConfig {
        (&self.paths).into()
    }

    pub fn reconstruction_config(&self) -> ReconstructionConfig {
        let r = &self.reconstruction;
        ReconstructionConfig {
            gamma: self.prior.gamma,
            eta_v: r.eta_v,
            max_outer: r.max_outer,
            grad_tol: r.grad_tol,
            likelihood_backend: r.likelihood,
            deriv_backend: r.deriv.unwrap_or(r.likelihood.default_deriv()),
            path_config: self.path_config(),
            freeze_boundary: r.freeze_boundary,
            max_halvings: r.max_halvings,
            armijo: r.armijo,
            spike_curvature: r.spike_curvature,
        }
    }

    pub fn truth(&self, grid: &Grid) -> Result<PotentialField> {
        self.truth.load(grid)
    }

    pub fn prior(&self, grid: &Grid) -> Result<PriorModel> {
        let v0 = self.prior.reference.load(grid)?;
        PriorModel::with_reference(grid, self.prior.gamma, v0.values().to_vec())
    }

    /// Starting point of the descent.
    pub fn initial_potential(&self, grid: &Grid) -> Result<PotentialField> {
        match self.reconstruction.init {
            InitialPotential::Reference => self.prior.reference.load(grid),
            InitialPotential::Truth => self.truth(grid),
        }
    }

    /// Overrides the likelihood backend and resets the derivative backend to
    /// its pairing.
    pub fn set_backend(&mut self, backend: LikelihoodBackend) {
        self.reconstruction.likelihood = backend;
        self.reconstruction.deriv = None;
    }
}
