use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("frequency beyond the resolved band: {0}")]
    OutOfBand(String),
    #[error("invalid interval: {0}")]
    InvalidInterval(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("wrap-around risk: {0}")]
    WrapAround(String),
    #[error("excluded endpoint: {0}")]
    ExcludedEndpoint(String),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("interval too large: measured Lipschitz factor {lipschitz:.3e} exceeds 1/2")]
    IntervalTooLarge { lipschitz: f64 },
    #[error("free evolution too large: S-norm {norm:.3e} exceeds {limit:.3e}")]
    DataTooLarge { norm: f64, limit: f64 },
    #[error("time-step bound violated: dt = {dt:.3e} exceeds {limit:.3e}")]
    TimeStep { dt: f64, limit: f64 },
    #[error("trajectory does not cover [{start}, {end}]")]
    CoverageGap { start: f64, end: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
