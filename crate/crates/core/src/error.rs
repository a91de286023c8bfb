use thiserror::Error;

pub type Result<T> = std::result::Result<T, KwsError>;

#[derive(Error, Debug)]
pub enum KwsError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("unsupported codec: {0}")]
    UnsupportedCodec(String),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt file: {0}")]
    Corruption(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("noise has zero power")]
    DegenerateNoise,
    #[error("signal has zero power")]
    DegenerateSignal,
    #[error("evaluation set has no keywords and no negative audio")]
    EmptyEval,
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}
