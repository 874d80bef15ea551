//! Batch experiment runner for the branching-diffusion toolkit: config
//! parsing, named verification checks, replicate fan-out, and report
//! emission. The `bdsim` binary is a thin layer over this library so the
//! acceptance suite can drive the same code paths.

pub mod canned;
pub mod checks;
pub mod config;
pub mod report;
pub mod runner;
