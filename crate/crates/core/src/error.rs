use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("waveform too short: {samples} samples, a frame needs {needed}")]
    WaveformTooShort { samples: usize, needed: usize },
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),
    #[error("voice activity detection removed every frame")]
    AllFramesRemoved,
    #[error("utterance too short: {frames} frames, need {needed}")]
    UtteranceTooShort { frames: usize, needed: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid angular margin m = {0}, must be >= 1")]
    InvalidMargin(u32),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("minibatch has no valid triplet")]
    NoValidTriplet,
    #[error("zero vector")]
    ZeroVector,
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(&'static str),
    #[error("speaker {speaker} has {have} usable utterances, need {need}")]
    InsufficientUtterances { speaker: usize, have: usize, need: usize },
    #[error("scores contain only one trial class")]
    SingleClassScores,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite {what} at epoch {epoch}, minibatch {batch}")]
    NonFinite { what: &'static str, epoch: usize, batch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
}
