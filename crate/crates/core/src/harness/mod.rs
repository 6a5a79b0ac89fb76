//! Experiment orchestration: configuration, the coupled ensemble, reports
//! and the command-line interface.

pub mod checks;
pub mod cli;
pub mod config;
pub mod experiment;
pub mod report;

pub use checks::{run_check_ops, CheckOpsReport};
pub use cli::cli_main;
pub use config::SimConfig;
pub use experiment::{
    beta_scaling_ledger, energy_ledger, modulus_of_continuity, moment_ledger, run_convergence, RungStats,
};
pub use report::ConvergenceReport;
