//! Experiment front end: built-in potentials, sampling, run configuration,
//! outputs, the oracle suite and the command implementations.

pub mod commands;
pub mod config;
pub mod output;
pub mod potentials;
pub mod sampling;
pub mod verify;
