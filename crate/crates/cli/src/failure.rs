use std::fmt;
use std::path::Path;

pub const VALIDATION: u8 = 1;
pub const RUNTIME: u8 = 2;

#[derive(Debug)]
pub enum Failure {
    /// Bad input, arguments or configuration.
    Validation(String),
    /// I/O or numerical failure while running.
    Runtime(String),
    /// Details already printed; exit with this code.
    Reported(u8),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Self::Validation(_) => VALIDATION,
            Self::Runtime(_) => RUNTIME,
            Self::Reported(c) => *c,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Self::Validation(msg.into())
    }

    /// Prefixes the message with `path`.
    pub fn context(self, path: &Path) -> Self {
        match self {
            Self::Validation(m) => Self::Validation(format!("{}: {m}", path.display())),
            Self::Runtime(m) => Self::Runtime(format!("{}: {m}", path.display())),
            r => r,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        let msg = format!("{}: {e}", path.display());
        if e.kind() == std::io::ErrorKind::NotFound {
            Self::Validation(msg)
        } else {
            Self::Runtime(msg)
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Validation(m) | Self::Runtime(m) => f.write_str(m),
            Self::Reported(c) => write!(f, "failed with exit code {c}"),
        }
    }
}

impl From<speccomp::Error> for Failure {
    fn from(e: speccomp::Error) -> Self {
        if e.is_validation() {
            Self::Validation(e.to_string())
        } else {
            Self::Runtime(e.to_string())
        }
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> CliResult {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::Runtime(format!("serializing {}: {e}", path.display())))?;
    std::fs::write(path, text + "\n").map_err(|e| Failure::io(path, e))
}

pub fn create_dir(path: &Path) -> CliResult {
    std::fs::create_dir_all(path).map_err(|e| Failure::io(path, e))
}
