use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("subject {subject}: signal file {} not found", path.display())]
    MissingSignal { subject: String, path: PathBuf },

    #[error("subject {subject}: expected {expected} channels, found {found}")]
    ChannelMismatch {
        subject: String,
        expected: usize,
        found: usize,
    },

    #[error("subject {subject}: unknown label `{label}` (expected HC or PD)")]
    UnknownLabel { subject: String, label: String },

    #[error("subject {subject}: non-finite sample in channel {channel} at index {index}")]
    NonFinite {
        subject: String,
        channel: String,
        index: usize,
    },

    #[error("unknown channel `{0}`")]
    UnknownChannel(String),

    #[error("the two layouts share no channels")]
    EmptyIntersection,

    #[error("malformed file: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("no epochs in group {0}")]
    EmptyGroup(String),

    #[error("training diverged at epoch {epoch}: non-finite {what}")]
    Diverged { epoch: usize, what: String },

    #[error("pruning retained no channels; lower alpha or raise beta to relax the thresholds")]
    EmptyMask,

    #[error("quality gate failed: mean score {mean_score:.3} is below {threshold}")]
    QualityGate { mean_score: f64, threshold: f64 },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tags an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, looking through stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}
