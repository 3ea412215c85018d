use thiserror::Error;

/// Errors raised along the identification / assembly / solve / recovery pipeline.
#[derive(Debug, Error)]
pub enum IocError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("infeasible model: {0}")]
    InfeasibleModel(String),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("insufficient excitation: {0}")]
    InsufficientExcitation(String),

    #[error("recovery failure: {0}")]
    RecoveryFailure(String),

    #[error("generation failure: {0}")]
    GenerationFailure(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IocError {
    /// Short stable tag used in JSON error records.
    pub fn kind(&self) -> &'static str {
        match self {
            IocError::Argument(_) => "argument",
            IocError::InfeasibleModel(_) => "infeasible-model",
            IocError::NumericalBreakdown(_) => "numerical-breakdown",
            IocError::InsufficientExcitation(_) => "insufficient-excitation",
            IocError::RecoveryFailure(_) => "recovery-failure",
            IocError::GenerationFailure(_) => "generation-failure",
            IocError::Format(_) => "format",
            IocError::Io(_) => "io",
        }
    }
}

impl From<serde_json::Error> for IocError {
    fn from(e: serde_json::Error) -> Self {
        IocError::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, IocError>;
