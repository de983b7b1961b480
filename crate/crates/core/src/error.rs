use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: unreadable WAV file: {reason}")]
    Wav { path: PathBuf, reason: String },

    #[error("{path}: unsupported encoding: {reason}")]
    UnsupportedEncoding { path: PathBuf, reason: String },

    #[error("{path}: audio contains no samples")]
    EmptyAudio { path: PathBuf },

    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),

    #[error("invalid frame spec: {0}")]
    InvalidFrameSpec(String),

    #[error("signal of {len} samples is shorter than one window of {window_len}")]
    SignalTooShort { len: usize, window_len: usize },

    #[error("invalid spectrogram: {0}")]
    InvalidSpectrogram(String),

    #[error("parameter `{name}` out of domain at channel {channel}: {value}")]
    ParamDomain {
        name: &'static str,
        channel: usize,
        value: f64,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("need at least 2 frames for statistics pooling, got {0}")]
    TooFewFrames(usize),

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("invalid score set: {0}")]
    InvalidScores(String),

    #[error("corrupt {what}: {reason}")]
    Corrupt { what: &'static str, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input or configuration rather than
    /// a runtime or numerical failure. A path that does not exist counts as
    /// bad input; other I/O errors do not.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Diverged { .. } => false,
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            _ => true,
        }
    }
}
