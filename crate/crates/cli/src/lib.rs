//! Experiment harness for temporal mean-field learning: seeded sweeps over the
//! resource-selection and queueing games with CSV and JSON output.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod output;
