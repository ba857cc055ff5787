use thiserror::Error;

/// Errors raised across the simulation, ROM and inversion layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("factorization failed at block {block}: {reason}")]
    Factorization { block: usize, reason: String },

    #[error("lanczos step extraction failed at block {0}: singular block")]
    Extraction(usize),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("linear program infeasible: {0}")]
    Infeasible(String),

    #[error("forward evaluation failed at coefficients {coeffs:?}: {source}")]
    Forward {
        coeffs: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
