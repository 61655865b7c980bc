use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid registry: {0}")]
    Registry(String),

    #[error("unknown option code `{0}`")]
    UnknownOption(String),

    #[error("empty party set")]
    EmptySet,

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: invalid row: {message}")]
    Row { line: u64, message: String },

    #[error("survey has no respondents")]
    EmptySurvey,

    #[error("survey has no decided respondents")]
    NoDecided,

    #[error("invalid allocation constraint: alpha = {alpha}, beta = {beta}")]
    Constraint { alpha: f64, beta: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("respondent {index}: {message}")]
    Respondent { index: usize, message: String },

    #[error("enumeration budget exceeded: {needed} > {budget}, use a smaller instance")]
    Budget { needed: f64, budget: f64 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
