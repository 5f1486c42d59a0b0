use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] cpsize::Error),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("{stage} failed at {context}: {source}")]
    Stage {
        stage: &'static str,
        context: String,
        #[source]
        source: cpsize::Error,
    },

    #[error("records schema mismatch: column {column}")]
    Schema { column: String },

    #[error("{0}")]
    Report(String),

    #[error("{} grid point(s) failed: {}", .0.len(), .0.join("; "))]
    Sweep(Vec<String>),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
