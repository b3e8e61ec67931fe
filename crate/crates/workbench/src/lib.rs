//! Experiment tooling: instance generators, the sample-maximum baseline, configuration
//! files, output writers and the `fomcert` CLI.

pub mod baseline;
pub mod cli;
pub mod config;
pub mod generators;
pub mod output;
