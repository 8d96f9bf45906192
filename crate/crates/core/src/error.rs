use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular dynamics: {0}")]
    Singularity(String),

    #[error("integration failed at t = {last_time}: {reason}")]
    Integration { last_time: f64, reason: String },

    #[error("training diverged at batch {batch}: {reason}")]
    Training { batch: usize, reason: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("riccati solver: {0}")]
    Riccati(String),

    #[error("initial controller does not stabilize the linearization: {0}")]
    NotStabilizing(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
