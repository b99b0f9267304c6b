use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the motion generation stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid action spec: {0}")]
    InvalidSpec(String),

    #[error("{what} out of range: {detail}")]
    OutOfRange { what: &'static str, detail: String },

    #[error("upsampling unsupported: target {target} fps > source {from} fps")]
    UpsampleUnsupported { from: u32, target: u32 },

    #[error("invalid segment boundaries: {0}")]
    InvalidBoundaries(String),

    #[error("motion too short: {frames} frames, need at least {needed}")]
    TooShort { frames: usize, needed: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("corrupt tokens: {0}")]
    CorruptTokens(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("duplicate segment id {0}")]
    DuplicateId(u64),

    #[error("sequence of length {len} exceeds context {context}")]
    ContextOverflow { len: usize, context: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("ambiguous benchmark case: {0}")]
    AmbiguousCase(String),

    #[error("generation failed after {rounds} round(s)")]
    GenerationFailed { rounds: usize, transcript: Vec<u32> },

    #[error("gallery pool of {available} cannot supply {needed} distractors")]
    InsufficientGallery { available: usize, needed: usize },

    #[error("configuration invalid:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<String>),

    #[error("stage `{stage}` is missing input {path:?}; run `{needs}` first")]
    Dependency { stage: String, needs: String, path: PathBuf },

    #[error("unknown segment id {0}")]
    UnknownSegment(u64),

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
