use jumpgame_core::Error as CoreError;

/// Failures of a command. Configuration, validation and feasibility problems
/// exit with 2, everything else with 1.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("validation error: {0}")]
    Validation(#[source] CoreError),
    #[error("runtime error: {0}")]
    Runtime(#[source] CoreError),
    #[error("io error: {context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("output error: {0}")]
    Output(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Validation(_) => 2,
            Self::Runtime(_) | Self::Io { .. } | Self::Output(_) => 1,
        }
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Self {
        let context = context.into();
        move |source| Self::Io { context, source }
    }
}

impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::EmptyGenerator
            | CoreError::DimensionMismatch { .. }
            | CoreError::NegativeOffDiagonal { .. }
            | CoreError::RowSumViolation { .. }
            | CoreError::DominatingRateNotFound
            | CoreError::InvalidState { .. }
            | CoreError::GridTooCoarse { .. }
            | CoreError::InvalidDistribution(_)
            | CoreError::InvalidGrid(_)
            | CoreError::InvalidMarkLaw(_)
            | CoreError::InvalidParameter { .. }
            | CoreError::InfeasibleLambda1 { .. }
            | CoreError::InfeasibleLambda2 { .. }
            | CoreError::UnsupportedKappa => Self::Validation(e),
            _ => Self::Runtime(e),
        }
    }
}

impl From<csv::Error> for AppError {
    fn from(e: csv::Error) -> Self {
        Self::Output(e.to_string())
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        Self::Output(e.to_string())
    }
}
