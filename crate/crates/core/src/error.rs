use thiserror::Error;

/// Errors raised by the library. Every variant names the offending value.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("invalid prevalence: {0}")]
    InvalidPrevalence(String),

    #[error("not diagonally dominant: P[{column},{column}] = {diagonal} <= 1/2")]
    NotDiagonallyDominant { column: usize, diagonal: f64 },

    #[error("matrix is singular")]
    Singular,

    #[error("bound diverges: rho_max = {rho_max} >= 1/2")]
    BoundDiverges { rho_max: f64 },

    #[error("no water level: delta keeps sign {sign} on t in [{t_lo:e}, {t_hi:e}]")]
    NoWaterLevel { t_lo: f64, t_hi: f64, sign: f64 },

    #[error("class {class} has no samples")]
    EmptyClass { class: usize },

    #[error("Bayes partition is degenerate: class {class} is never the argmax")]
    DegenerateBayes { class: usize },

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("at t = {t}: {source}")]
    AtThreshold { t: f64, source: Box<Error> },

    #[error("at varsigma^2 = {varsigma2}: {source}")]
    AtNoiseLevel { varsigma2: f64, source: Box<Error> },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
