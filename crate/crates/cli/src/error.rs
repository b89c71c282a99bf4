use std::fmt;
use std::path::Path;

/// Command failure, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Malformed flags, files or settings (exit 2).
    Input(String),
    /// The numerical routines failed (exit 3).
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> CliError {
        CliError::Input(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(msg) => write!(f, "input error: {msg}"),
            CliError::Numeric(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl From<mvlink::Error> for CliError {
    fn from(err: mvlink::Error) -> Self {
        use mvlink::Error as E;
        match err {
            E::DimensionMismatch { .. }
            | E::EmptyColumn(_)
            | E::RankDeficient
            | E::InvalidParameter(_)
            | E::Unsupported(_) => CliError::Input(err.to_string()),
            E::NonFinite(_)
            | E::BacktrackingExhausted { .. }
            | E::Degenerate(_)
            | E::NoConvergence(_) => CliError::Numeric(err.to_string()),
        }
    }
}
