//! Configuration, command dispatch and artifacts for the `ballcrit` binary.

pub mod config;
pub mod error;
pub mod export;
pub mod report;
pub mod run;

pub use config::RunConfig;
pub use error::CliError;
pub use export::export_solution;
pub use report::RunReport;
pub use run::{run, run_with_jobs, RunOutcome};
