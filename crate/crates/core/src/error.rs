use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while loading triples, typing entities or assembling a dataset.
#[derive(Debug, Error)]
pub enum KgError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot derive a type for entity `{entity}`: {reason}")]
    Typing { entity: String, reason: String },
    #[error("relation name `{0}` collides with a generated relation name")]
    RelationNameCollision(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("triple ({head}, {relation}, {tail}) appears in both the {first} and {second} splits")]
    OverlappingSplits {
        head: String,
        relation: String,
        tail: String,
        first: &'static str,
        second: &'static str,
    },
}

/// Errors raised while parsing rule files or estimating rule confidence.
#[derive(Debug, Error)]
pub enum RuleError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no instance path matches the body {body} (zero body support)")]
    ZeroSupport { body: String },
    #[error("number of samples must be at least 1")]
    NoSamples,
}

/// Errors raised by the policy (parameter shapes, checkpoints, replay).
#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid policy configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "checkpoint shape mismatch for block `{block}`: expected {expected:?}, found {found:?}"
    )]
    ShapeMismatch {
        block: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("action ({relation}, {entity}) is not available at step {step}")]
    UnavailableAction {
        step: usize,
        relation: u32,
        entity: u32,
    },
}

/// Errors raised during training.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training split is empty")]
    EmptyTrainingSet,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch} (baseline {baseline}, mean reward {mean_reward})")]
    Diverged {
        epoch: usize,
        batch: usize,
        baseline: f64,
        mean_reward: f64,
    },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Errors raised while reading flat key=value configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
