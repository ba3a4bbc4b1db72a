use thiserror::Error;

/// Errors surfaced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("median of an empty proposal set is undefined")]
    EmptyProposals,

    #[error("alignment undefined: the summed norm vector is zero")]
    ZeroMeanVector,

    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },

    #[error("efficiency undefined for H_opt = {0}")]
    ZeroOptimalHarvest(f64),

    #[error("cannot embed empty text")]
    EmptyText,

    #[error("prompt placeholder `{0}` was left unsubstituted")]
    UnfilledPlaceholder(String),

    #[error("backend transport error: {0}")]
    Transport(String),

    #[error("mock script line {line}: {reason}")]
    Script { line: usize, reason: String },

    #[error("llm agents require a generation backend")]
    MissingBackend,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field,
        reason: reason.into(),
    }
}
