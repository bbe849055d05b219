use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate bone {bone} ({name}) in frame {frame}: parent and child joints coincide")]
    DegenerateBone {
        frame: usize,
        bone: usize,
        name: &'static str,
    },

    #[error("insufficient frames: need at least {needed}, got {got}")]
    InsufficientFrames { needed: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{words} words do not fit into {slots} slots")]
    WindowOverflow { words: usize, slots: usize },

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("speaker id {id} out of range (model has {count} speakers)")]
    SpeakerOutOfRange { id: usize, count: usize },

    #[error("rank-deficient fit: effective rank {rank}, need {needed}")]
    RankDeficient { rank: usize, needed: usize },

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Divergence {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("unknown format `{0}`")]
    UnknownFormat(String),

    #[error("{path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    /// Short machine-readable class name, stable across releases.
    pub fn class(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::DegenerateBone { .. } => "degenerate_bone",
            Error::InsufficientFrames { .. } => "insufficient_frames",
            Error::Shape(_) => "shape",
            Error::WindowOverflow { .. } => "window_overflow",
            Error::Corpus(_) => "corpus",
            Error::SpeakerOutOfRange { .. } => "speaker_out_of_range",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::Divergence { .. } => "divergence",
            Error::Numeric(_) => "numeric",
            Error::Checkpoint(_) => "checkpoint",
            Error::UnknownFormat(_) => "unknown_format",
            Error::Path { .. } | Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Wav(_) => "wav",
            Error::Tensor(_) => "tensor",
        }
    }

    pub(crate) fn at_path(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Path { path, source }
    }
}
