//! Companion library behind the `pnpdm` binary: configuration, NPY array
//! IO, metrics, manifests, and the experiment runner.

pub mod config;
pub mod manifest;
pub mod metrics;
pub mod npy;
pub mod runner;
