use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum ScfaError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    Decomposition { pivot: usize, value: f64 },
    #[error("non-finite numeric input: {0}")]
    Numeric(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("outside supported regime: {0}")]
    Regime(String),
    #[error("degenerate reference entry: |{value:e}| below threshold")]
    DegenerateReference { value: f64 },
    #[error("degenerate vector: {0}")]
    DegenerateVector(String),
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("initialization error: {0}")]
    Initialization(String),
    #[error("no active sub-frames for source {source_index}")]
    InsufficientActivity { source_index: usize },
    #[error("scene error: {0}")]
    Scene(String),
    #[error("solve failed at segment {segment}, bin {bin}: {source}")]
    Solve {
        segment: usize,
        bin: usize,
        #[source]
        source: Box<ScfaError>,
    },
    #[error("config error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = ScfaError> = std::result::Result<T, E>;

impl ScfaError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        ScfaError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True when the error stems from user-supplied configuration rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            ScfaError::Configuration(_) | ScfaError::Schema { .. } | ScfaError::Io { .. }
        )
    }
}
