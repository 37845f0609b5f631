use thiserror::Error;

/// Errors raised by the reconstruction toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("path solver did not converge for boundary {start} -> {end} after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        start: f64,
        end: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("singular operator: {0}")]
    Singular(String),

    #[error("too many failed mesh nodes ({failed} of {total}): {nodes:?}")]
    FailedNodes {
        failed: usize,
        total: usize,
        nodes: Vec<usize>,
    },

    #[error("likelihood backend failed at datum {index} (node {node}): {reason}")]
    Datum { index: usize, node: usize, reason: String },

    #[error("no stationary split point: {0}")]
    NoStationaryPoint(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Singular(_) => "singular",
            Error::FailedNodes { .. } => "failed_nodes",
            Error::Datum { .. } => "datum",
            Error::NoStationaryPoint(_) => "no_stationary_point",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Toml(_) => "config_parse",
        }
    }

    /// True for errors caused by the user's input rather than the numerics.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Toml(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
