use thiserror::Error;

/// Errors raised by the geometry kernels, attention operators and experiments.
#[derive(Debug, Error)]
pub enum GeoError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{op}: dimension mismatch ({left} vs {right})")]
    DimensionMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },

    #[error("matrix data has {got} entries, expected {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, got: usize },

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("point is off the hyperboloid: residual {residual:e} exceeds tolerance {tolerance:e}")]
    OffManifold { residual: f64, tolerance: f64 },

    #[error("curvature must be at least {min:e}, got {got}")]
    InvalidCurvature { got: f64, min: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("distance gradient undefined: points coincide at the clip floor")]
    CoincidentPoints,

    #[error("function evaluation is not finite when perturbing coordinate {coordinate}")]
    NonFiniteEvaluation { coordinate: usize },

    #[error("reference kernel is capped at {cap} rows, got n={n}, m={m}")]
    SizeCap { n: usize, m: usize, cap: usize },

    #[error("stress diverged (NaN) at step {step}; try a step size below {hint:e}")]
    Divergence { step: usize, hint: f64 },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("output directory {} does not exist", .0.display())]
    MissingDirectory(std::path::PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GeoError>;
