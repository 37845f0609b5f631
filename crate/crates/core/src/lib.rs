//! Bayesian reconstruction of one-dimensional quantum potentials from
//! position measurements on a canonical ensemble.
//!
//! The likelihood of the data is a diagonal element of the statistical
//! operator `exp(-beta H)/Z`. It is evaluated either classically, through
//! imaginary-time classical paths with Gaussian fluctuations, or exactly from
//! a mesh eigendecomposition. A smoothness prior closes the inverse problem
//! and a backtracking gradient descent finds the maximum-posterior potential.

// `!(x > 0.0)` is deliberate: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod paths;
pub mod prior;
pub mod reconstruction;
pub mod semiclassical;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{build_grid, Grid, MeshFunction, MeshRole, PhysicsParams, Potential, PotentialField};
