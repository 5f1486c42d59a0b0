use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid label space: {0}")]
    InvalidLabelSpace(String),

    #[error("unsupported score/label-space pairing: {0}")]
    UnsupportedPairing(String),

    #[error("type mismatch: {0}")]
    TypeMismatch(String),

    #[error("value {value} outside [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("invalid alpha {0}: must lie in (0, 1)")]
    InvalidAlpha(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("invalid c.d.f.: {0}")]
    InvalidCdf(String),

    #[error("quadrature did not converge on [{a}, {b}] (error estimate {error:e})")]
    QuadratureNotConverged { a: f64, b: f64, error: f64 },

    #[error("trial {index} failed: {source}")]
    Trial {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("training failed: {0}")]
    Training(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("{path}: row {row}: {message}")]
    Csv {
        path: String,
        row: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    CsvFormat(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
