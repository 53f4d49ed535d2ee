use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate measure: {0}")]
    Degenerate(String),

    #[error("data support not covered by the base measure: {0}")]
    SupportMismatch(String),

    #[error("basis order {0} was dropped as numerically degenerate")]
    DroppedOrder(usize),

    #[error("maxent solver did not converge: gradient norm {grad_norm:.3e} after {iterations} iterations")]
    NonConvergence { grad_norm: f64, iterations: usize },

    #[error("unattainable moment targets: parameter norm exceeded {0:.1}")]
    UnattainableMoments(f64),

    #[error("sampling from a fourier model with negative mass is refused")]
    NegativeModel,

    #[error("refit failed on {failed} of {total} bootstrap replicates (>5%)")]
    RefitFailure { failed: usize, total: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("bootstrap resolution too coarse: B={b} cannot resolve p-values below {min_p:.3e} (need {target:.3e})")]
    BootstrapResolution { b: usize, min_p: f64, target: f64 },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
