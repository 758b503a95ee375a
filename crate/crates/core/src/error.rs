use std::io;

use thiserror::Error;

/// Errors raised anywhere in the protocol stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid hypermesh shape d={d}, n={n}: both must be at least 2")]
    InvalidShape { d: usize, n: usize },

    #[error("hypermesh too large: {d}^{n} clients")]
    TopologyTooLarge { d: usize, n: usize },

    #[error("client count {got} does not match hypermesh size {expected}")]
    WrongClientCount { expected: usize, got: usize },

    #[error("unknown client id {0}")]
    UnknownClient(usize),

    #[error("unknown group id {0}")]
    UnknownGroup(usize),

    #[error("client {0} registered twice")]
    DuplicateRegistration(usize),

    #[error("invalid group parameters: {0}")]
    InvalidGroupParams(String),

    #[error("integer {value} outside the signed range of the scalar field")]
    ScalarOutOfRange { value: i128 },

    #[error("missing pairwise random from client {from} for client {to}")]
    MissingRandom { from: usize, to: usize },

    #[error("vector length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("code {code} outside the {codebook} codebook")]
    CodeOutsideCodebook { code: i64, codebook: &'static str },

    #[error("sealed message failed authentication")]
    SealAuthentication,

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("malformed IDX file: {0}")]
    Idx(String),

    #[error("truncated frame: needed {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },

    #[error("unsupported wire version {0}")]
    VersionMismatch(u8),

    #[error("unknown message tag {0}")]
    UnknownTag(u8),

    #[error("length field {0} exceeds the frame limit")]
    LengthOverflow(u64),

    #[error("malformed payload: {0}")]
    Malformed(String),

    #[error("simulation aborted: {0}")]
    SimulationAborted(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config syntax: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
