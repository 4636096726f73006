use std::fmt;
use std::path::PathBuf;

/// Failure of a CLI run, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config entries.
    Usage(String),
    /// Unusable input data.
    Data(String),
    Io { path: PathBuf, source: std::io::Error },
    Core(xmpo::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        use xmpo::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Io { .. } => 2,
            CliError::Core(e) => match e {
                E::Config(_) => 1,
                E::NonFinite(_) | E::DegenerateWeight { .. } | E::NonScalarLoss { .. } => 3,
                _ => 2,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Data(m) => write!(f, "data: {m}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<xmpo::Error> for CliError {
    fn from(e: xmpo::Error) -> Self {
        CliError::Core(e)
    }
}
