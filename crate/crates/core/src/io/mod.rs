//! File formats, configuration and the experiment runner.

pub mod config;
pub mod container;
pub mod experiment;
pub mod synth;
pub mod wfdb;
