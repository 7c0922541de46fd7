//! Problem registry, run configuration and experiment drivers for the
//! `fbf-bench` command line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod io;
pub mod registry;

use fbf_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown problem {name:?}; valid names: {}", valid.join(", "))]
    UnknownProblem { name: String, valid: Vec<String> },
}

pub type Result<T> = std::result::Result<T, BenchError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_MAX_ITER: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(CoreError::Diverged { .. } | CoreError::FlowDiverged { .. }) => EXIT_DIVERGED,
            _ => EXIT_INVALID,
        }
    }
}
