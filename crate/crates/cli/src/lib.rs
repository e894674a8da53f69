//! Batch runner: JSON configuration in, gauge series, step history, field
//! rasters and a run summary out.

pub mod config;
pub mod run;
