use std::path::PathBuf;

use impedance_core::Error as CoreError;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Divergence or another numerical breakdown during a run.
    pub const RUNTIME: i32 = 1;
    /// The configuration is malformed or describes an inadmissible system.
    pub const INFEASIBLE: i32 = 2;
    pub const VERIFICATION: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    /// A run diverged; whatever was recorded before the blow-up is in `partial`.
    #[error("simulation diverged at t = {time} s; partial output in {}", partial.display())]
    Diverged { time: f64, partial: PathBuf },

    #[error("verification failed: {}", failed.join(", "))]
    Verification { failed: Vec<String> },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::INFEASIBLE,
            CliError::Core(e) => match e {
                CoreError::Dimension { .. }
                | CoreError::InvalidParameter(_)
                | CoreError::DegenerateModel(_)
                | CoreError::ShapingInfeasible { .. }
                | CoreError::ParametrizationSingular
                | CoreError::NotApplicable(_)
                | CoreError::Configuration(_)
                | CoreError::TooManyStates { .. } => exit::INFEASIBLE,
                CoreError::TransformSingular(_)
                | CoreError::Assembly(_)
                | CoreError::ConversionAccuracy { .. }
                | CoreError::RootFinding { .. }
                | CoreError::Divergence { .. } => exit::RUNTIME,
            },
            CliError::Diverged { .. } | CliError::Io { .. } | CliError::Csv(_) => exit::RUNTIME,
            CliError::Verification { .. } => exit::VERIFICATION,
        }
    }
}
