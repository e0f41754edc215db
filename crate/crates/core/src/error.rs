//! Error type shared by all modules.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no depth at pixel (row {row}, col {col})")]
    NoDepth { row: usize, col: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("plane fit failed: {0}")]
    PlaneFit(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("floorplan has no segments")]
    EmptyFloorplan,

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("frame {frame}: depth is {dw}x{dh} but labels are {lw}x{lh}")]
    ShapeMismatch {
        frame: usize,
        dw: usize,
        dh: usize,
        lw: usize,
        lh: usize,
    },

    #[error("{what}: expected {expected}, got {got}")]
    CountMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("match references unknown frame {frame} (sequence has {count} frames)")]
    UnknownFrame { frame: usize, count: usize },

    #[error("gravity estimation failed: {0}")]
    Gravity(String),

    #[error("boundary scan construction failed: {0}")]
    Boundary(String),

    #[error("yaw estimation failed: {0}")]
    Yaw(String),

    #[error("scale/shift estimation failed: {0}")]
    ScaleShift(String),

    #[error("loss became NaN in the {term} term at step {step}")]
    NanLoss { term: &'static str, step: usize },

    #[error("metric failed: {0}")]
    Metric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
