use thiserror::Error;

/// Errors raised across graph construction, model evaluation and auditing.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("edge set contains a directed cycle through `{0}`")]
    Cycle(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate {0}")]
    Duplicate(String),
    #[error("invalid query: {0}")]
    Overlap(String),
    #[error("joint table would need {cells} cells, cap is {cap}")]
    SizeCap { cells: u128, cap: usize },
    #[error("conditioning event has zero probability")]
    ZeroProbabilityEvidence,
    #[error("conditioning block is singular (determinant {0:e})")]
    SingularConditioning(f64),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("value outside domain: {0}")]
    Domain(String),
    #[error("empty group: {0}")]
    EmptyGroup(String),
    #[error("insufficient strata: {0}")]
    InsufficientStrata(String),
    #[error("invalid parameters: {0}")]
    Param(String),
    #[error("degenerate group `{0}`: variance must be positive")]
    DegenerateGroup(String),
    #[error("dataset: {0}")]
    Data(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Data(e.to_string())
    }
}
