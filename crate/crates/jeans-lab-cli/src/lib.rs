//! Command-line orchestration of the jeans-lab pipeline: run configurations,
//! subcommand drivers and reproducible artifacts.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod run;

pub use artifacts::{Manifest, Summary, Verdict};
pub use config::{Command, RunConfig};
pub use error::CliError;
pub use run::{run, RunOutcome};
