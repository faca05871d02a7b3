use thiserror::Error;

/// Errors raised by the library. The CLI maps `Config` to exit status 2 and
/// everything else to exit status 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point ({x}, {y}) lies outside the tabulated niche [{x_min}, {x_max}] x [{y_min}, {y_max}]")]
    OutOfDomain {
        x: f64,
        y: f64,
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },

    #[error("{stage} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NotConverged { stage: String, iterations: usize, residual: f64 },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("time step {dt} violates the explicit-reaction bound (admissible dt <= {bound})")]
    TimeStep { dt: f64, bound: f64 },

    #[error("domain exhaustion failed after {} rungs: {source}", partial.len())]
    Exhaustion {
        partial: Vec<crate::eigen::Rung>,
        source: Box<Error>,
    },

    #[error("singular matrix encountered at pivot {0}")]
    Singular(usize),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidArgument(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
