//! Experiment harness: synthetic data, per-method defaults, config files,
//! CSV traces and the enumeration probe suite.

pub mod algorithms;
pub mod synth;
pub mod config;
pub mod experiment;
pub mod output;
pub mod probe;
