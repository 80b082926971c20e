use thiserror::Error;

/// Errors produced anywhere in the compression and analytics pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("signal power is zero; SNR is undefined")]
    ZeroSignal,

    #[error("no quantization exponent in [{low}, {high}] reaches {target_db} dB")]
    NoFeasibleTau { low: i32, high: i32, target_db: f64 },

    #[error("decode error: {0}")]
    Decode(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
