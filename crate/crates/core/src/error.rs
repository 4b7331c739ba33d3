use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty panel: no agent survived filtering")]
    EmptyPanel,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate macro change: |delta_v| = {delta_v:e} is below {tolerance:e}")]
    DegenerateMacroChange { delta_v: f64, tolerance: f64 },

    #[error("closed-form attribution needs the zero baseline; use the midpoint path integral for {0}")]
    NonZeroBaseline(String),

    #[error("no closed form for value function `{0}`; use the midpoint path integral")]
    NoClosedForm(String),

    #[error("infeasible: exact enumeration over {n} agents exceeds the limit of {limit}")]
    Infeasible { n: usize, limit: usize },

    #[error("zero-norm vector: {0}")]
    ZeroNorm(String),

    #[error("malformed panel container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("image encoding failed: {0}")]
    Image(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
