use thiserror::Error;

/// Errors raised by configuration checks and the file-facing parts of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parameter `{name}` = {value} is outside [{min}, {max}]")]
    OutOfBounds {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("fill ratio {0} is not a multiple of 1/25")]
    FillRatio(f64),

    #[error("expected {expected} values, got {actual}")]
    Length { expected: usize, actual: usize },

    #[error("{0}")]
    Calibration(String),

    #[error("report audit failed: {0}")]
    Audit(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
