//! Error type shared across the toolkit.
//!
//! Variants are grouped by how callers are expected to react: `Config`
//! means the request itself was malformed (bad flag values, impossible
//! grids), while the remaining variants describe failures encountered
//! while carrying out a well-formed request.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The requested operation can never succeed as specified.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A numeric input was NaN or infinite where a finite value is required.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// Mismatched dimensions between tensors, rows, or embeddings.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Structurally valid request, but the data cannot support it
    /// (single-class labels, empty series, all rows masked, ...).
    #[error("unusable data: {0}")]
    Data(String),

    /// A file could not be read or written.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file was read but its contents do not match the expected format.
    #[error("parse error in {path}{}: {msg}", fmt_row(.row))]
    Parse {
        path: PathBuf,
        row: Option<usize>,
        msg: String,
    },

    /// Optimization failed (divergence, no usable hyper-parameter config).
    #[error("training failed: {0}")]
    Training(String),
}

fn fmt_row(row: &Option<usize>) -> String {
    match row {
        Some(r) => format!(" (row {r})"),
        None => String::new(),
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, row: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), row, msg: msg.into() }
    }

    pub fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite { context: context.into() }
    }

    /// True for errors that indicate a caller mistake rather than a
    /// runtime failure; the command line maps these to exit code 2.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_error_mentions_row() {
        let err = Error::parse("series.csv", Some(17), "bad float");
        let msg = err.to_string();
        assert!(msg.contains("series.csv"), "{msg}");
        assert!(msg.contains("row 17"), "{msg}");
    }

    #[test]
    fn config_detection() {
        assert!(Error::Config("x".into()).is_config());
        assert!(!Error::Data("x".into()).is_config());
    }
}
