//! Experiment harness: configuration, Monte Carlo runners, reports and CLI.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod mc;
pub mod report;

pub use cli::{run_cli, run_cli_with};
pub use config::ExperimentConfig;
pub use mc::{run_mc_parametric, run_mc_semiparametric};
pub use report::McReport;
