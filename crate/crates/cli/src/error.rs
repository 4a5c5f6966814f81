use std::fmt;
use std::path::Path;

/// Exit status 2 for usage, configuration and input-data problems, 1 for
/// failures while running.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<holorank::Error> for CliError {
    fn from(e: holorank::Error) -> Self {
        use holorank::Error as E;
        match e {
            E::Config(_) | E::Parse { .. } | E::Data(_) | E::Vocabulary { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// Fails with a usage error naming `path` when it is not a readable file.
pub fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} file not found: {}", path.display())))
    }
}
