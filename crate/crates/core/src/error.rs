use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while loading or validating a scenario configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("invalid value `{value}` for `{field}`: {reason}")]
    InvalidValue {
        field: String,
        value: String,
        reason: String,
    },
    #[error("invalid configuration ({field}): {reason}")]
    Invariant { field: String, reason: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("path loss is undefined for distance {0} m")]
    NonPositiveDistance(f64),
    #[error("invalid path loss parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PhyError {
    #[error("transmitter {0} has no contribution in TTI record {1}")]
    UnknownTransmitter(u32, u64),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReceiverError {
    #[error("copy pointer to TTI {pointer_tti} is {distance} TTIs from TTI {current_tti}, beyond the {horizon}-TTI horizon")]
    PointerBeyondHorizon {
        pointer_tti: u64,
        current_tti: u64,
        distance: u64,
        horizon: u64,
    },
}

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Top-level error for a simulation run.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Output(#[from] OutputError),
}
