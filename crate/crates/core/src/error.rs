use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rejected input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit domain error: {0}")]
    FitDomain(String),

    #[error("theorem check failed at lag {lag}: {detail}")]
    CheckFailed { lag: usize, detail: String },

    #[error("routing regime violated on sample {sample}: {detail}")]
    Regime { sample: usize, detail: String },

    #[error("probe produced non-finite output at ({t}, {tau})")]
    Probe { t: usize, tau: usize },

    #[error("stale cache: {0}")]
    Cache(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged at step {step} (loss {loss})")]
    Divergence { step: usize, loss: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a failed check.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_) | Error::Shape(_) | Error::Domain(_) | Error::FitDomain(_) | Error::Config(_)
        )
    }
}
