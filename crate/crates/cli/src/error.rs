use std::fmt;

/// A failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit 2.
    Config(String),
    /// Exit 3.
    Io(String),
    /// Exit 4.
    Hash(String),
    /// Exit 1.
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Io(_) => 3,
            Self::Hash(_) => 4,
            Self::Other(_) => 1,
        }
    }

    /// Prefixes the message with a file name.
    pub fn at(self, path: &std::path::Path) -> Self {
        let p = path.display();
        match self {
            Self::Config(m) => Self::Config(format!("{p}: {m}")),
            Self::Io(m) => Self::Io(format!("{p}: {m}")),
            Self::Hash(m) => Self::Hash(format!("{p}: {m}")),
            Self::Other(m) => Self::Other(format!("{p}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Io(m) => write!(f, "I/O error: {m}"),
            Self::Hash(m) => write!(f, "hash mismatch: {m}"),
            Self::Other(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<listrecon::Error> for CliError {
    fn from(e: listrecon::Error) -> Self {
        use listrecon::Error as E;
        match e {
            E::InvalidConfig(_) | E::EmptyData(_) => Self::Config(e.to_string()),
            E::Io(_) | E::BadMagic { .. } | E::Format(_) => Self::Io(e.to_string()),
            E::HashMismatch(_) => Self::Hash(e.to_string()),
            other => Self::Other(other.to_string()),
        }
    }
}

impl From<listrecon_lpd::Error> for CliError {
    fn from(e: listrecon_lpd::Error) -> Self {
        match e {
            listrecon_lpd::Error::Core(c) => c.into(),
            listrecon_lpd::Error::InvalidConfig(m) => Self::Config(m),
            other => Self::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}
