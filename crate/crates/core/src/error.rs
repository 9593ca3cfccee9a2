//! Error type shared across the toolkit.

/// Everything that can go wrong in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid parameter value or malformed configuration input.
    #[error("configuration error: {0}")]
    Config(String),

    /// Mismatched vector or matrix dimensions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A closed-loop or open-loop integration produced a non-finite state.
    #[error("simulation diverged at t = {t} s")]
    Diverged { t: f64 },

    /// Offline training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    /// A network state or rate evaluation became non-finite.
    #[error("numerical divergence: {0}")]
    NonFinite(String),

    /// Bad command-line invocation.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that indicate numerical blow-up rather than bad input.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            Error::Diverged { .. } | Error::TrainingDiverged { .. } | Error::NonFinite(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
