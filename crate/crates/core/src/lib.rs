//! Floorplan-aware bundle adjustment for posed RGB-D sequences.
//!
//! Given a sequence of depth frames with initial camera poses, a set of
//! cross-frame keypoint matches, per-pixel floor/wall labels and a 2D
//! floorplan, this crate refines the camera poses by minimizing a
//! three-term cost: a geometric term over matched keypoints backprojected
//! to 3D, a term pulling labeled floor points to a fitted floor plane, and
//! a term pulling labeled wall points to the floorplan walls.
//!
//! The main pieces:
//!
//! - [`geometry`]: poses, backprojection, plane fitting, normal estimation
//!   and a kd-tree used by every spatial query.
//! - [`io`]: parsers and writers for the on-disk formats (see `FORMATS.md`).
//! - [`floorplan`]: the extruded 3D floorplan model and its nearest-point /
//!   nearest-segment queries.
//! - [`alignment`]: gravity estimation, boundary-scan construction and the
//!   yaw/scale/shift transform aligning floorplan and scan.
//! - [`clouds`]: semantic point clouds (full / floor / walls) that re-pose
//!   with the cameras.
//! - [`ba`]: the loss terms, the three walls-pulling strategies and the
//!   gradient-descent optimizer.
//! - [`metrics`]: reconstruction quality metrics (MME, MPV, MOM, NND, NSD).
//! - [`synth`]: a synthetic scene generator producing ground-truth
//!   sequences for end-to-end evaluation.

pub mod alignment;
pub mod ba;
pub mod clouds;
pub mod error;
pub mod floorplan;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, Plane, PointCloud, Pose, Provenance};
