use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry: {0}")]
    Geometry(String),

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("patch structure violated: {0}")]
    PatchStructure(String),

    #[error("linear solver failed: {reason} (residual {residual:e})")]
    LinearSolver { reason: String, residual: f64 },

    #[error("Newton failed on interval {interval}: residual {residual:e} after {iterations} iterations")]
    NewtonDivergence {
        interval: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("estimator variant {variant} needs {what}")]
    VariantMismatch { variant: String, what: String },

    #[error("config line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("missing config key '{0}'")]
    MissingKey(String),

    #[error("config: {0}")]
    Config(String),

    #[error("trajectory store: {0}")]
    Store(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
