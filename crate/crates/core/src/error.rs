use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("events out of order: t={t} follows t={prev} (at index {index})")]
    Ordering { index: usize, prev: i64, t: i64 },

    #[error("event at t={t} lies outside exposure window ({t_start}, {t_end}]")]
    OutsideWindow { t: i64, t_start: i64, t_end: i64 },

    #[error("invalid exposure window: t_end={t_end} must exceed t_start={t_start}")]
    InvalidWindow { t_start: i64, t_end: i64 },

    #[error("accumulator state: {0}")]
    State(&'static str),

    #[error("geometry mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    GeometryMismatch {
        expected_w: u32,
        expected_h: u32,
        got_w: u32,
        got_h: u32,
    },

    #[error("pixel ({x}, {y}) outside {width}x{height} sensor")]
    OutOfBounds { x: u32, y: u32, width: u32, height: u32 },

    #[error("timestamp {t} precedes reference time {t_ref}")]
    Range { t: i64, t_ref: i64 },

    #[error("invalid value: {0}")]
    Domain(String),

    #[error("contrast sign violated: {0}")]
    Sign(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
