//! Stage implementations behind the `audioqa` binary. Each stage reads its
//! predecessors' files under the run's output directory and writes its own.

pub mod config;
pub mod pipeline;
pub mod stats;
pub mod verify;

use std::path::PathBuf;

pub use config::RunConfig;

/// Errors that map onto specific exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{} is missing; run `audioqa {stage}` first", path.display())]
    MissingStage { stage: &'static str, path: PathBuf },
    #[error("verify found {0} violation(s)")]
    Validation(usize),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Usage(_) | Failure::MissingStage { .. } => 2,
        }
    }
}

/// Exit code for any error a stage returns: 1 for validation and runtime
/// failures, 2 for usage problems.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    err.downcast_ref::<Failure>().map_or(1, Failure::exit_code)
}
