use thiserror::Error;

#[derive(Debug, Error)]
pub enum TseError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("wav error: {0}")]
    Wav(String),

    #[error("sample rate mismatch: got {got} Hz, corpus expects {expected} Hz")]
    SampleRateMismatch { got: u32, expected: u32 },

    #[error("zero-power input: {0}")]
    ZeroPower(&'static str),

    #[error("duplicate speaker identity: {0}")]
    DuplicateSpeaker(String),

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("input too short: {got} samples, need at least {need}")]
    InputTooShort { got: usize, need: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("training error: {0}")]
    Training(String),
}

pub type Result<T> = std::result::Result<T, TseError>;
