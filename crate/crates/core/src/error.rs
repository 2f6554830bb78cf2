use thiserror::Error;

/// Errors raised by the planning toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("target coincides with BS {bs} at ({x}, {y}, {z})")]
    Coincident { bs: usize, x: f64, y: f64, z: f64 },

    #[error("degenerate density: total mass over the region is zero")]
    DegenerateDensity,

    #[error("empty sample set")]
    EmptySamples,

    #[error("replication factor {factor} is not a perfect power of dimension {dim}")]
    NotPerfectPower { factor: usize, dim: usize },

    #[error("remaining FIM for BS {bs} is singular at target {target}")]
    SingularRemainder { bs: usize, target: usize },

    #[error("rate floor {required} bit/s/Hz infeasible; best achievable {best} bit/s/Hz")]
    InfeasibleRate { required: f64, best: f64 },

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("catalog: {0}")]
    Catalog(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
