//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A sampled field does not satisfy the power-of-two FFT contract.
    #[error("size error: {0}")]
    Size(String),

    /// A numeric argument is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An argument combination is structurally invalid.
    #[error("argument error: {0}")]
    Argument(String),

    /// The sample rate cannot represent the occupied bandwidth.
    #[error("aliasing error: {0}")]
    Aliasing(String),

    /// A non-finite value appeared mid-computation.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A quadrature did not converge under grid refinement.
    #[error("accuracy error: {0}")]
    Accuracy(String),

    /// A stochastic model could not be constructed (e.g. non-positive-definite ACF).
    #[error("model error: {0}")]
    Model(String),

    /// A parameter estimate failed (bracket failure, degenerate data).
    #[error("estimation error: {0}")]
    Estimation(String),

    /// Particle weights underflowed; carries the symbol index where it happened.
    #[error("particle weight underflow at symbol {symbol}")]
    WeightUnderflow { symbol: usize },

    /// An experiment configuration violates an invariant; names the field.
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
