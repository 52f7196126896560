use std::path::PathBuf;

#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("duration {0} ns is not a multiple of the erase quantum")]
    Alignment(u64),
    #[error("PEC {pec} is outside the modeled range [0, {max}]")]
    Extrapolation { pec: u32, max: u32 },
    #[error("invalid state: {0}")]
    State(String),
    #[error("logic error: {0}")]
    Logic(String),
    #[error("addressing error: {0}")]
    Addressing(String),
    #[error("capacity exhausted: {0}")]
    CapacityExhausted(String),
    #[error("request error: {0}")]
    Request(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("statistics error: {0}")]
    Statistics(String),
    #[error("calibration error: {0}")]
    Calibration(String),
    #[error("simulation error: {0}")]
    Simulation(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
