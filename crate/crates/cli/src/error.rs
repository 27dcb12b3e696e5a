use std::io;
use std::path::{Path, PathBuf};

use monorange_core::eval::EvalError;
use monorange_core::graph::GraphError;
use monorange_core::optimizer::OptimizeError;
use monorange_core::ranging::RangingError;
use monorange_core::scale::ScaleError;
use monorange_core::sim::SimError;
use monorange_core::text::TextError;
use thiserror::Error;

/// Process exit status for each failure class. Scripts may rely on these.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;
    pub const NUMERICAL: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: TextError },
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => exit::USAGE,
            CliError::Io { .. } | CliError::Parse { .. } | CliError::Data(_) => exit::DATA,
            CliError::Numerical(_) => exit::NUMERICAL,
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(path: &Path, source: TextError) -> Self {
        CliError::Parse { path: path.to_path_buf(), source }
    }

    pub fn config(path: &Path, message: impl Into<String>) -> Self {
        CliError::Config { path: path.to_path_buf(), message: message.into() }
    }
}

impl From<ScaleError> for CliError {
    fn from(e: ScaleError) -> Self {
        CliError::Data(format!("scale estimation failed: {e}"))
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Data(format!("invalid factor graph: {e}"))
    }
}

impl From<OptimizeError> for CliError {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::Graph(g) => g.into(),
            OptimizeError::InvalidConfig(_) => CliError::Usage(format!("optimizer: {e}")),
            OptimizeError::NonFiniteCost { .. } | OptimizeError::RankDeficient { .. } => {
                CliError::Numerical(format!("optimization failed: {e}"))
            }
        }
    }
}

impl From<RangingError> for CliError {
    fn from(e: RangingError) -> Self {
        match e {
            RangingError::DegenerateGeometry { .. } => CliError::Numerical(format!("trilateration failed: {e}")),
            _ => CliError::Data(format!("trilateration failed: {e}")),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(format!("evaluation failed: {e}"))
    }
}

/// Simulation failures stem from the configuration, so they carry its path.
pub fn sim_error(path: &Path, e: SimError) -> CliError {
    CliError::config(path, e.to_string())
}
