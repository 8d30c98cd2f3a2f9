//! Experiment harness for uncertainty-aware policy optimization on the
//! cell-culture digital twin: configuration, file formats, campaign runner
//! and the command-line front end.

pub mod cli;
pub mod config;
pub mod csvio;
pub mod error;
pub mod harness;
pub mod params_file;
pub mod rng;
pub mod stoich_file;

