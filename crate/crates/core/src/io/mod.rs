//! Parsers and writers for every on-disk artifact.
//!
//! The formats are small and fully specified in `FORMATS.md` at the
//! repository root. Loaders are partial inverses of the writers: writing
//! then re-reading reproduces the in-memory value, and re-writing
//! reproduces the file byte for byte.

mod cloud;
mod floorplan;
mod grids;
mod matches;
mod sequence;
mod trajectory;

pub use cloud::{export_cloud, import_cloud};
pub use floorplan::{parse_floorplan, write_floorplan, Floorplan2D, FloorplanSegment};
pub use grids::{read_label_grid, write_depth_grid, write_label_grid, read_depth_grid, Grid};
pub use matches::{load_matches, write_matches, MatchLoad};
pub use sequence::{load_sequence, write_manifest, SceneManifest};
pub use trajectory::{read_trajectory, write_trajectory};

use crate::geometry::{CameraIntrinsics, Pose};

/// Semantic class ids used in label grids.
///
/// The mapping is configurable; these are the defaults written by the
/// synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelMap {
    pub floor: u8,
    pub wall: u8,
}

impl Default for LabelMap {
    fn default() -> Self {
        LabelMap { floor: 1, wall: 2 }
    }
}

/// One RGB-D frame: depth, labels, intrinsics and the initial pose.
#[derive(Debug, Clone)]
pub struct Frame {
    pub index: usize,
    pub depth: Grid<u16>,
    pub labels: Grid<u8>,
    pub intrinsics: CameraIntrinsics,
    pub initial_pose: Pose,
}

/// A cross-frame keypoint match with sub-pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointMatch {
    pub frame_a: usize,
    pub ua: f64,
    pub va: f64,
    pub frame_b: usize,
    pub ub: f64,
    pub vb: f64,
}
