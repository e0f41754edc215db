//! The pose-refinement engine: a three-term cost over camera poses
//! (geometric 3D point error, floor-to-plane pulling, walls-to-floorplan
//! pulling) minimized by gradient descent with momentum, alternated with
//! scan-to-floorplan re-alignment.

mod cluster;
mod losses;
mod optimize;

pub use cluster::{cluster_walls, ClusterParams};
pub use losses::{
    assign_nearest_planes, assign_nearest_points, evaluate_plane_targets, evaluate_point_targets,
    floor_loss, geometric_loss, total_loss, walls_loss_fixed_nearest_wall,
    walls_loss_iterative_nearest_wall, walls_loss_nearest_point, LossState, LossTerms,
    PoseGradients,
};
pub use optimize::{
    optimize_poses, write_convergence_log, ConvergenceLog, OptimizeResult, RealignContext,
    StepRecord,
};

use crate::error::{Error, Result};
use crate::geometry::{backproject_pixel, Plane, PointCloud};
use crate::io::{Frame, KeypointMatch};
use nalgebra::Vector3;

/// Walls-to-floorplan pulling strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WallsStrategy {
    /// Pull each wall point to its nearest sampled floorplan point,
    /// re-queried every step.
    NearestPoint,
    /// Pull to the wall plane of the nearest floorplan point, re-queried
    /// every step.
    IterativeNearestWall,
    /// Pull to a plane fixed per point by the mutual cluster matching.
    #[default]
    FixedNearestWall,
}

impl std::str::FromStr for WallsStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "np" | "nearest-point" => Ok(WallsStrategy::NearestPoint),
            "inw" | "iterative-nearest-wall" => Ok(WallsStrategy::IterativeNearestWall),
            "fnw" | "fixed-nearest-wall" => Ok(WallsStrategy::FixedNearestWall),
            other => Err(Error::InvalidParameter(format!(
                "unknown walls strategy '{other}' (expected np, inw or fnw)"
            ))),
        }
    }
}

impl std::fmt::Display for WallsStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            WallsStrategy::NearestPoint => "np",
            WallsStrategy::IterativeNearestWall => "inw",
            WallsStrategy::FixedNearestWall => "fnw",
        };
        f.write_str(s)
    }
}

/// Optimization hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BAConfig {
    pub lambda_floor: f64,
    pub lambda_walls: f64,
    pub walls_strategy: WallsStrategy,
    pub lr_initial: f64,
    pub lr_reduced: f64,
    /// Step after which the learning rate switches to `lr_reduced` and
    /// convergence is checked.
    pub lr_switch_step: usize,
    /// Terminate when the loss delta falls below this (after the switch).
    pub convergence_eps: f64,
    pub momentum: f64,
    /// Re-run scan-to-floorplan alignment every this many steps
    /// (0 disables alternation).
    pub realign_period: usize,
    pub max_steps: usize,
}

impl Default for BAConfig {
    fn default() -> Self {
        BAConfig {
            lambda_floor: 10.0,
            lambda_walls: 0.6,
            walls_strategy: WallsStrategy::FixedNearestWall,
            lr_initial: 1e-3,
            lr_reduced: 1e-4,
            lr_switch_step: 20_000,
            convergence_eps: 1e-5,
            momentum: 0.9,
            realign_period: 5_000,
            max_steps: 40_000,
        }
    }
}

impl BAConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda_floor", self.lambda_floor),
            ("lambda_walls", self.lambda_walls),
            ("lr_initial", self.lr_initial),
            ("lr_reduced", self.lr_reduced),
            ("convergence_eps", self.convergence_eps),
        ];
        for (name, v) in positive {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be non-negative and finite, got {v}"
                )));
            }
        }
        if self.lr_reduced >= self.lr_initial {
            return Err(Error::InvalidParameter(format!(
                "lr_reduced ({}) must be below lr_initial ({})",
                self.lr_reduced, self.lr_initial
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// A matched keypoint pair backprojected into the two camera frames.
/// The camera-frame points stay fixed during optimization; only the poses
/// move.
#[derive(Debug, Clone, Copy)]
pub struct MatchPair {
    pub frame_a: u32,
    pub cam_a: Vector3<f64>,
    pub frame_b: u32,
    pub cam_b: Vector3<f64>,
}

/// All matched keypoint pairs (the set M of the geometric term).
#[derive(Debug, Clone, Default)]
pub struct MatchSet {
    pub pairs: Vec<MatchPair>,
}

impl MatchSet {
    /// Backproject keypoint matches through their frames' depth maps.
    /// Matches whose depth is missing on either side are skipped and
    /// counted.
    pub fn from_keypoint_matches(frames: &[Frame], matches: &[KeypointMatch]) -> (Self, usize) {
        let mut pairs = Vec::with_capacity(matches.len());
        let mut skipped = 0usize;
        for m in matches {
            let fa = &frames[m.frame_a];
            let fb = &frames[m.frame_b];
            // Sub-pixel coordinates look up depth at the nearest pixel;
            // clamp so coordinates just inside the border stay in range.
            let clamp = |v: f64, n: usize| (v.round() as usize).min(n - 1);
            let da = fa
                .depth
                .at(clamp(m.va, fa.depth.height), clamp(m.ua, fa.depth.width));
            let db = fb
                .depth
                .at(clamp(m.vb, fb.depth.height), clamp(m.ub, fb.depth.width));
            let (pa, pb) = match (
                backproject_pixel(m.ua, m.va, da, &fa.intrinsics),
                backproject_pixel(m.ub, m.vb, db, &fb.intrinsics),
            ) {
                (Ok(a), Ok(b)) => (a, b),
                _ => {
                    skipped += 1;
                    continue;
                }
            };
            pairs.push(MatchPair {
                frame_a: m.frame_a as u32,
                cam_a: pa,
                frame_b: m.frame_b as u32,
                cam_b: pb,
            });
        }
        (MatchSet { pairs }, skipped)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// The floor plane, fitted once before optimization and fixed thereafter.
#[derive(Debug, Clone, Copy)]
pub struct FloorModel {
    pub plane: Plane,
}

impl FloorModel {
    pub fn fit(floor_cloud: &PointCloud) -> Result<Self> {
        Ok(FloorModel {
            plane: crate::geometry::fit_plane(&floor_cloud.points)?,
        })
    }
}

/// Fixed point-to-plane correspondences (the set of the fixed
/// nearest wall strategy): walls-cloud point index paired with a wall
/// plane index of the 3D floorplan.
#[derive(Debug, Clone, Default)]
pub struct FixedWallAssignment {
    pub pairs: Vec<(u32, u32)>,
}

impl FixedWallAssignment {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}
