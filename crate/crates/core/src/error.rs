use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MemnnError>;

#[derive(Debug, Error)]
pub enum MemnnError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty statement")]
    EmptyStatement,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("layout has no {0} region")]
    MissingRegion(&'static str),
    #[error("layout has no time dimensions")]
    MissingTimeDims,
    #[error("no candidate memories")]
    EmptyCandidates,
    #[error("memory is empty")]
    EmptyMemory,
    #[error("invalid slot {0}")]
    InvalidSlot(usize),
    #[error("k-means: {0}")]
    KMeans(String),
    #[error("non-finite loss at example {example} (epoch {epoch})")]
    NonFiniteLoss { epoch: usize, example: usize },
    #[error("no training examples")]
    NoExamples,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("simulation: {0}")]
    Simulation(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("bad matrix file: {0}")]
    MatrixFormat(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}
