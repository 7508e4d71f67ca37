//! Crate-wide error and result types.

use std::fmt;

/// Everything that can go wrong across the crate, grouped by failure class.
#[derive(Debug)]
pub enum Error {
    /// Shape or width mismatch between tensors, layers, or dataset fields.
    Dimension(String),
    /// An operation precondition was violated by the caller.
    Contract(String),
    /// A computation produced NaN or infinity.
    NonFinite(String),
    /// A text artifact failed to parse; `line` is 1-based.
    Parse { line: usize, message: String },
    /// A binary or text artifact is structurally invalid.
    Format(String),
    /// Unknown or malformed configuration entry.
    Config(String),
    /// Underlying I/O failure, annotated with the path involved.
    Io { path: String, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(msg) => write!(f, "dimension error: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Io { path, source } => write!(f, "io error on {path}: {source}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    /// Wrap an I/O error with the path it occurred on.
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Error {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_includes_class_and_message() {
        let e = Error::Dimension("got [3], want [4]".into());
        assert_eq!(e.to_string(), "dimension error: got [3], want [4]");
        let e = Error::Parse { line: 7, message: "bad float".into() };
        assert_eq!(e.to_string(), "parse error at line 7: bad float");
    }

    #[test]
    fn io_carries_path() {
        let e = Error::io("/tmp/x.blob", std::io::Error::new(std::io::ErrorKind::NotFound, "gone"));
        let s = e.to_string();
        assert!(s.contains("/tmp/x.blob"), "{s}");
    }
}
