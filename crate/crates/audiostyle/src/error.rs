use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad wav file {path}: {reason}")]
    BadWav { path: PathBuf, reason: String },
    #[error("unsupported bit depth: {0} bits")]
    UnsupportedBitDepth(u16),
    #[error("unsupported channel count: {0}")]
    UnsupportedChannels(u16),
    #[error("empty audio clip")]
    EmptyClip,
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("clip too short: {len} samples, need at least {min}")]
    ClipTooShort { len: usize, min: usize },
    #[error("spectrogram has no phase")]
    MissingPhase,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("zero-variance envelope in band {band}")]
    ZeroVarianceEnvelope { band: usize },
    #[error("sample rate mismatch: {content} Hz vs {style} Hz")]
    RateMismatch { content: u32, style: u32 },
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("loss diverged at iteration {iteration}: {loss:.3e} exceeds 10x initial {initial:.3e}")]
    Diverged {
        iteration: usize,
        loss: f64,
        initial: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
