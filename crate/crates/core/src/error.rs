use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid zone map: {0}")]
    ZoneMap(String),

    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("reference nodes {0} and {1} are coincident")]
    CoincidentNodes(String, String),

    #[error("need at least {needed} reference nodes, got {got}")]
    InsufficientNodes { needed: usize, got: usize },

    #[error("measurement has no available reference nodes")]
    EmptyMeasurement,

    #[error("device {0} already has an active track")]
    AlreadyTracked(String),

    #[error("time regression for device {device}: {t} < {last_seen}")]
    TimeRegression { device: String, t: f64, last_seen: f64 },

    #[error("misaligned inputs: {0}")]
    Misaligned(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Parse { line, msg: e.to_string() }
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}
