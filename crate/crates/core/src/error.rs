use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{StateId, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid UTF-8 at byte offset {offset}")]
    Decode { offset: usize },

    #[error("input contains no utterances")]
    EmptyInput,

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("model fails validation: {}", DisplayList(.0))]
    Invalid(Vec<Violation>),

    #[error("state {state} has zero visits but nonzero counts")]
    Inconsistent { state: StateId },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("utterance {index} has no path through the model")]
    NoPath { index: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{}: {source}", .path.display())]
    Path {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at(path: impl AsRef<Path>, source: Error) -> Self {
        Error::Path {
            path: path.as_ref().to_path_buf(),
            source: Box::new(source),
        }
    }

    /// Process exit status: 1 configuration, 2 input data or I/O,
    /// 3 internal invariant violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Path { source, .. } if matches!(**source, Error::Config(_)) => 1,
            Error::Path { .. }
            | Error::Decode { .. }
            | Error::EmptyInput
            | Error::Format { .. }
            | Error::NoPath { .. }
            | Error::Io(_) => 2,
            Error::Invalid(_) | Error::Inconsistent { .. } | Error::Contract(_) => 3,
        }
    }
}

struct DisplayList<'a>(&'a [Violation]);

impl fmt::Display for DisplayList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}
