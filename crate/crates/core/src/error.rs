use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("retention count js={js} outside [1, {d}]")]
    RetentionOutOfRange { js: usize, d: usize },

    #[error("fixed positions collide for js={js}, d={d}; reduce js")]
    PositionCollision { js: usize, d: usize },

    #[error("operation requires a {expected} batch")]
    SchemeMismatch { expected: &'static str },

    #[error("underdetermined fit; reduce knots or order ({retained} retained points, {params} coefficients)")]
    Underdetermined { retained: usize, params: usize },

    #[error("ill-conditioned spline gram matrix (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag, used to label failed cells in result tables.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::RetentionOutOfRange { .. } => "js_out_of_range",
            Error::PositionCollision { .. } => "position_collision",
            Error::SchemeMismatch { .. } => "scheme_mismatch",
            Error::Underdetermined { .. } => "underdetermined",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::NonFinite(_) => "non_finite",
            Error::Numeric(_) => "numeric",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}
