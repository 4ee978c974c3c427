use thiserror::Error;

/// Errors produced while building, solving or verifying problems.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported cone: {0}")]
    UnsupportedCone(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("point lies outside the uncertainty set (distance {distance:.3e})")]
    NotInSet { distance: f64 },

    #[error("enumeration cap exceeded: {count} scenarios > {cap}")]
    CapExceeded { count: u128, cap: u128 },

    #[error("duplicate backend id `{0}`")]
    DuplicateBackend(String),

    #[error("unknown backend `{0}`")]
    UnknownBackend(String),

    #[error("price file row {row}: {message}")]
    PriceRow { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_check(context: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context: context.to_string(),
            expected,
            found,
        })
    }
}
