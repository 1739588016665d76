//! Crate-wide error type.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    /// Incompatible array shapes, with both shapes named.
    #[error("shape error: {0}")]
    Shape(String),

    /// An operation was called outside its contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A value fell outside the support of its feature type.
    #[error("domain error: feature '{feature}' got value {value}: {reason}")]
    Domain {
        feature: String,
        value: f64,
        reason: String,
    },

    /// Non-finite gradient or loss, with the offending parameter or stage.
    #[error("numerical divergence in '{0}'")]
    Diverged(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at {location}: {reason}")]
    Parse { location: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
