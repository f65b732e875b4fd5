use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum MassError {
    #[error("non-finite value in layer {layer}")]
    NonFiniteValue { layer: usize },

    #[error("non-finite loss in phase {phase} at step {step}")]
    NonFiniteLoss { phase: usize, step: usize },

    #[error("loss variable was not recorded on this tape")]
    TapeMismatch,

    #[error("singular mass matrix (condition number {condition:e})")]
    SingularMassMatrix { condition: f64 },

    #[error("{system}: point outside domain ({reason})")]
    DomainError { system: String, reason: String },

    #[error("zero vector has no significant components")]
    ZeroVector,

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("degenerate run {seed}: {reason}")]
    DegenerateRun { seed: u64, reason: String },

    #[error("singular normal equations in constrained fit")]
    SingularFit,

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown system `{name}` (valid: {valid})")]
    UnknownSystem { name: String, valid: String },

    #[error("no runs to analyze")]
    NoRuns,

    #[error("{0} is not a run record")]
    NotARunRecord(PathBuf),

    #[error("missing artifact {artifact} for phase {phase}")]
    MissingArtifact { phase: usize, artifact: String },

    #[error("hash mismatch for {file}")]
    HashMismatch { file: String },

    #[error("incompatible record: {0}")]
    IncompatibleRecord(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl MassError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MassError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, MassError>;
