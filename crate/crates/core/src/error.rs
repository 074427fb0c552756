use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("site {site} outside window [{lo}, {hi}]")]
    OutOfRange { site: i64, lo: i64, hi: i64 },

    #[error("non-finite value at site {site}: {what}")]
    NonFinite { site: i64, what: String },

    #[error("energy within {dist:e} of the spectrum (near-singular resolvent)")]
    NearSingular { dist: f64 },

    #[error("degenerate configuration: {what} has smallest singular value {smin:e}")]
    Degenerate { what: String, smin: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("insufficient fit range: {0}")]
    InsufficientRange(String),

    #[error("numerical failure: {0}")]
    Numeric(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
