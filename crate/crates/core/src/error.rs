use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("region out of bounds: {0}")]
    Bounds(String),

    #[error("cannot compose {quadrant} patch: {reason}")]
    Composition {
        quadrant: &'static str,
        reason: String,
    },

    #[error("invalid label: {0}")]
    Label(String),

    #[error("invalid batch: {0}")]
    Batch(String),

    #[error("invalid input: {0}")]
    Input(String),
}
