use thiserror::Error;

/// Errors produced by the library.
///
/// Every variant maps to a stable one-word category used by the CLI for
/// machine-parsable error lines (`category: message`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Input(String),

    /// An oracle returned a non-finite value or violated a basic contract.
    #[error("{0}")]
    Oracle(String),

    /// The parameter resolver failed to converge.
    #[error("{0}")]
    Resolve(String),

    /// The privacy budget is incompatible with the run shape.
    #[error("{0}")]
    Budget(String),

    /// An iterate became non-finite during a run.
    #[error("at iteration {iteration}: {message}")]
    Divergence { iteration: u64, message: String },

    /// Config text could not be parsed.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A stored trace file is malformed.
    #[error("row {row}: {message}")]
    Format { row: usize, message: String },

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// One-word category for machine-parsable CLI output.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::Oracle(_) => "oracle",
            Error::Resolve(_) => "resolve",
            Error::Budget(_) => "budget",
            Error::Divergence { .. } => "divergence",
            Error::Parse { .. } => "parse",
            Error::Format { .. } => "format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
