//! Error type shared by all engine operations.

use alloc::string::String;

/// Errors produced by tensor construction and the pipeline operators.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("non-finite input coordinate at point {index}")]
    NonFiniteInput { index: usize },

    #[error("voxel index {value} on axis {axis} outside |c| < 2^20")]
    CoordOutOfRange { axis: char, value: i64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),

    #[error("channel mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("level mismatch: {a} vs {b}")]
    LevelMismatch { a: i32, b: i32 },

    #[error("level {level} out of range for {what}")]
    LevelOutOfRange { level: i32, what: &'static str },

    #[error("coordinate sets disagree: {0}")]
    CoordMismatch(&'static str),

    #[error("parameter {name}: expected {expected} values, got {got}")]
    ParamShape {
        name: String,
        expected: usize,
        got: usize,
    },

    #[error("parameter {name}: non-finite value")]
    ParamNotFinite { name: String },

    #[error("missing parameters: {0}")]
    MissingParams(String),

    #[error("unknown parameters: {0}")]
    UnknownParams(String),

    #[error("degenerate box: all sizes must be positive and finite")]
    DegenerateBox,

    #[error("dense oracle grid exceeds the {limit}^3 guard")]
    OracleGuard { limit: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = core::result::Result<T, EngineError>;
