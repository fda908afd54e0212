use thiserror::Error;

/// Error taxonomy for the whole crate.
///
/// Numerical routines return `Solvability`, `IterationLimit`, `PositivityFloor`
/// or `NonFinite`; structural routines return `ShapeMismatch`,
/// `UnsupportedDimension` or `InvalidProjector`; configuration and I/O
/// problems surface as `Config`, `Parse` and `Io`.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("solvability violated: {0}")]
    Solvability(String),

    #[error("iteration limit reached: {0}")]
    IterationLimit(String),

    #[error("matrix not positive definite within floor {floor:e}: {context}")]
    PositivityFloor { floor: f64, context: String },

    #[error("unsupported complex dimension {0} (only n = 1, 2)")]
    UnsupportedDimension(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("projector candidate invalid: {0}")]
    InvalidProjector(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
