//! Experiment harness for the matrix-weighted square function library:
//! configuration, seeded generators, per-trial experiments and the
//! `verify-all` acceptance sweep.

pub mod config;
pub mod experiments;
pub mod generate;
pub mod output;
pub mod verify;
