use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("invalid parameter `{name}`: {detail}")]
    Parameter { name: &'static str, detail: String },

    #[error(
        "dimension mismatch: expected {expected_width}x{expected_height}, got {width}x{height}"
    )]
    Dimensions {
        expected_width: usize,
        expected_height: usize,
        width: usize,
        height: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("no frames found in {0}")]
    NoFrames(PathBuf),

    #[error("synthetic layout infeasible: {0}")]
    Infeasible(String),

    #[error("frame count mismatch: predicted {predicted}, ground truth {truth}")]
    FrameCountMismatch { predicted: usize, truth: usize },

    #[error("malformed track file {path} line {line}: {detail}")]
    TrackFile {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("stage `{stage}` failed on frame {frame}: {source}")]
    Stage {
        stage: &'static str,
        frame: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, detail: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// True for errors caused by bad input data rather than bad usage or bugs.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::Format { .. }
            | Error::Dimensions { .. }
            | Error::NoFrames(_)
            | Error::FrameCountMismatch { .. }
            | Error::TrackFile { .. }
            | Error::Infeasible(_) => true,
            Error::Stage { source, .. } => source.is_data_error(),
            Error::Parameter { .. } | Error::Config(_) => false,
        }
    }

    /// True for configuration and parameter errors.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Parameter { .. } | Error::Config(_) => true,
            Error::Stage { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}
