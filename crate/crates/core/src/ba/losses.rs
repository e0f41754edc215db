//! Loss terms and their analytic gradients.
//!
//! All terms are means of unsquared distances. Gradients are taken with
//! respect to a local pose parameterization per frame: 3 translation
//! coordinates plus a 3-parameter rotation increment applied on the left
//! (world side) of the quaternion, matching [`Pose::retract`].
//!
//! Nearest-neighbor targets (points or plane assignments) are held
//! constant inside a gradient evaluation; the `assign_*` / `evaluate_*`
//! pairs expose the two phases separately so callers can re-use or freeze
//! assignments.
//!
//! Accumulation runs in parallel over fixed-size chunks whose partial
//! sums are merged in chunk order, so results do not depend on the thread
//! count.

use super::{BAConfig, FixedWallAssignment, FloorModel, MatchSet, WallsStrategy};
use crate::clouds::SemanticClouds;
use crate::floorplan::Floorplan3D;
use crate::geometry::Pose;
use nalgebra::Vector3;
use rayon::prelude::*;

const CHUNK: usize = 4096;
/// Distances below this contribute no gradient (the direction r/|r| is
/// undefined at zero).
const NORM_GUARD: f64 = 1e-9;

/// Per-frame gradient in local pose coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseGradients {
    pub d_translation: Vec<Vector3<f64>>,
    pub d_rotation: Vec<Vector3<f64>>,
}

impl PoseGradients {
    pub fn zeros(n_frames: usize) -> Self {
        PoseGradients {
            d_translation: vec![Vector3::zeros(); n_frames],
            d_rotation: vec![Vector3::zeros(); n_frames],
        }
    }

    pub fn len(&self) -> usize {
        self.d_translation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_translation.is_empty()
    }

    fn merge(&mut self, other: &PoseGradients) {
        for (a, b) in self.d_translation.iter_mut().zip(&other.d_translation) {
            *a += b;
        }
        for (a, b) in self.d_rotation.iter_mut().zip(&other.d_rotation) {
            *a += b;
        }
    }

    pub fn add_scaled(&mut self, other: &PoseGradients, s: f64) {
        for (a, b) in self.d_translation.iter_mut().zip(&other.d_translation) {
            *a += s * b;
        }
        for (a, b) in self.d_rotation.iter_mut().zip(&other.d_rotation) {
            *a += s * b;
        }
    }

    fn scale(&mut self, s: f64) {
        for v in &mut self.d_translation {
            *v *= s;
        }
        for v in &mut self.d_rotation {
            *v *= s;
        }
    }
}

/// Accumulate `f` over `0..count` in fixed chunks, in parallel, merging
/// partials in chunk order.
fn par_accumulate<F>(count: usize, n_frames: usize, f: F) -> (f64, PoseGradients)
where
    F: Fn(usize, &mut f64, &mut PoseGradients) + Sync,
{
    if count == 0 {
        return (0.0, PoseGradients::zeros(n_frames));
    }
    let starts: Vec<usize> = (0..count).step_by(CHUNK).collect();
    let partials: Vec<(f64, PoseGradients)> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + CHUNK).min(count);
            let mut loss = 0.0;
            let mut grads = PoseGradients::zeros(n_frames);
            for i in start..end {
                f(i, &mut loss, &mut grads);
            }
            (loss, grads)
        })
        .collect();
    let mut loss = 0.0;
    let mut grads = PoseGradients::zeros(n_frames);
    for (l, g) in &partials {
        loss += l;
        grads.merge(g);
    }
    (loss, grads)
}

/// Add the gradient of a world-frame residual direction `g_w` to frame
/// `f`: translation picks it up directly, rotation via the cross product
/// with the rotated camera point.
#[inline]
fn add_pose_gradient(
    grads: &mut PoseGradients,
    frame: usize,
    rotated_cam: &Vector3<f64>,
    g_w: &Vector3<f64>,
) {
    grads.d_translation[frame] += g_w;
    grads.d_rotation[frame] += rotated_cam.cross(g_w);
}

/// Mean 3D distance between the world-frame backprojections of matched
/// keypoints, differentiated through both poses.
pub fn geometric_loss(matches: &MatchSet, poses: &[Pose]) -> (f64, PoseGradients) {
    let n = matches.pairs.len();
    let (sum, mut grads) = par_accumulate(n, poses.len(), |i, loss, grads| {
        let pair = &matches.pairs[i];
        let ra = poses[pair.frame_a as usize].rotate_vector(&pair.cam_a);
        let rb = poses[pair.frame_b as usize].rotate_vector(&pair.cam_b);
        let wa = ra + poses[pair.frame_a as usize].translation();
        let wb = rb + poses[pair.frame_b as usize].translation();
        let r = wa - wb;
        let d = r.norm();
        *loss += d;
        if d > NORM_GUARD {
            let dir = r / d;
            add_pose_gradient(grads, pair.frame_a as usize, &ra, &dir);
            add_pose_gradient(grads, pair.frame_b as usize, &rb, &(-dir));
        }
    });
    if n == 0 {
        return (0.0, grads);
    }
    grads.scale(1.0 / n as f64);
    (sum / n as f64, grads)
}

/// Mean distance of the re-posed floor points to the fixed floor plane.
pub fn floor_loss(
    clouds: &SemanticClouds,
    poses: &[Pose],
    floor: &FloorModel,
) -> (f64, PoseGradients) {
    let n = clouds.floor.len();
    let plane = floor.plane;
    let (sum, mut grads) = par_accumulate(n, poses.len(), |i, loss, grads| {
        let frame = clouds.floor_frame(i);
        let rotated = poses[frame].rotate_vector(clouds.floor_cam(i));
        let w = rotated + poses[frame].translation();
        let s = plane.signed_distance(&w);
        *loss += s.abs();
        if s.abs() > NORM_GUARD {
            let g = plane.normal() * s.signum();
            add_pose_gradient(grads, frame, &rotated, &g);
        }
    });
    if n == 0 {
        return (0.0, grads);
    }
    grads.scale(1.0 / n as f64);
    (sum / n as f64, grads)
}

/// Nearest sampled floorplan point per re-posed wall point.
pub fn assign_nearest_points(
    clouds: &SemanticClouds,
    poses: &[Pose],
    fp3d: &Floorplan3D,
) -> Vec<Vector3<f64>> {
    (0..clouds.walls.len())
        .into_par_iter()
        .map(|i| {
            let w = poses[clouds.walls_frame(i)].transform_point(clouds.walls_cam(i));
            let (idx, _) = fp3d.tree().nearest(&w).expect("non-empty floorplan");
            fp3d.points[idx]
        })
        .collect()
}

/// Mean distance of re-posed wall points to fixed target points.
pub fn evaluate_point_targets(
    clouds: &SemanticClouds,
    poses: &[Pose],
    targets: &[Vector3<f64>],
) -> (f64, PoseGradients) {
    let n = clouds.walls.len();
    debug_assert_eq!(n, targets.len());
    let (sum, mut grads) = par_accumulate(n, poses.len(), |i, loss, grads| {
        let frame = clouds.walls_frame(i);
        let rotated = poses[frame].rotate_vector(clouds.walls_cam(i));
        let w = rotated + poses[frame].translation();
        let r = w - targets[i];
        let d = r.norm();
        *loss += d;
        if d > NORM_GUARD {
            let dir = r / d;
            add_pose_gradient(grads, frame, &rotated, &dir);
        }
    });
    if n == 0 {
        return (0.0, grads);
    }
    grads.scale(1.0 / n as f64);
    (sum / n as f64, grads)
}

/// Nearest-point walls pulling: targets re-queried on every call and held
/// constant inside the gradient.
pub fn walls_loss_nearest_point(
    clouds: &SemanticClouds,
    poses: &[Pose],
    fp3d: &Floorplan3D,
) -> (f64, PoseGradients) {
    if clouds.walls.is_empty() || fp3d.is_empty() {
        return (0.0, PoseGradients::zeros(poses.len()));
    }
    let targets = assign_nearest_points(clouds, poses, fp3d);
    evaluate_point_targets(clouds, poses, &targets)
}

/// Wall-plane index of the nearest sampled floorplan point, per re-posed
/// wall point.
pub fn assign_nearest_planes(
    clouds: &SemanticClouds,
    poses: &[Pose],
    fp3d: &Floorplan3D,
) -> Vec<u32> {
    (0..clouds.walls.len())
        .into_par_iter()
        .map(|i| {
            let w = poses[clouds.walls_frame(i)].transform_point(clouds.walls_cam(i));
            let (idx, _) = fp3d.tree().nearest(&w).expect("non-empty floorplan");
            fp3d.point_wall[idx]
        })
        .collect()
}

/// Mean point-to-plane distance for per-point wall-plane indices.
pub fn evaluate_plane_targets(
    clouds: &SemanticClouds,
    poses: &[Pose],
    fp3d: &Floorplan3D,
    plane_of: &[u32],
) -> (f64, PoseGradients) {
    let n = clouds.walls.len();
    debug_assert_eq!(n, plane_of.len());
    let (sum, mut grads) = par_accumulate(n, poses.len(), |i, loss, grads| {
        let frame = clouds.walls_frame(i);
        let rotated = poses[frame].rotate_vector(clouds.walls_cam(i));
        let w = rotated + poses[frame].translation();
        let plane = &fp3d.walls[plane_of[i] as usize].plane;
        let s = plane.signed_distance(&w);
        *loss += s.abs();
        if s.abs() > NORM_GUARD {
            let g = plane.normal() * s.signum();
            add_pose_gradient(grads, frame, &rotated, &g);
        }
    });
    if n == 0 {
        return (0.0, grads);
    }
    grads.scale(1.0 / n as f64);
    (sum / n as f64, grads)
}

/// Iterative nearest wall: plane assignments re-queried on every call.
pub fn walls_loss_iterative_nearest_wall(
    clouds: &SemanticClouds,
    poses: &[Pose],
    fp3d: &Floorplan3D,
) -> (f64, PoseGradients) {
    if clouds.walls.is_empty() || fp3d.is_empty() {
        return (0.0, PoseGradients::zeros(poses.len()));
    }
    let plane_of = assign_nearest_planes(clouds, poses, fp3d);
    evaluate_plane_targets(clouds, poses, fp3d, &plane_of)
}

/// Fixed nearest wall: mean point-to-plane distance over the fixed
/// assignment only. An empty assignment contributes nothing.
pub fn walls_loss_fixed_nearest_wall(
    clouds: &SemanticClouds,
    poses: &[Pose],
    assignment: &FixedWallAssignment,
    fp3d: &Floorplan3D,
) -> (f64, PoseGradients) {
    let n = assignment.pairs.len();
    let (sum, mut grads) = par_accumulate(n, poses.len(), |i, loss, grads| {
        let (point_idx, plane_idx) = assignment.pairs[i];
        let point_idx = point_idx as usize;
        let frame = clouds.walls_frame(point_idx);
        let rotated = poses[frame].rotate_vector(clouds.walls_cam(point_idx));
        let w = rotated + poses[frame].translation();
        let plane = &fp3d.walls[plane_idx as usize].plane;
        let s = plane.signed_distance(&w);
        *loss += s.abs();
        if s.abs() > NORM_GUARD {
            let g = plane.normal() * s.signum();
            add_pose_gradient(grads, frame, &rotated, &g);
        }
    });
    if n == 0 {
        return (0.0, grads);
    }
    grads.scale(1.0 / n as f64);
    (sum / n as f64, grads)
}

/// Everything the total loss needs besides the poses.
pub struct LossState<'a> {
    pub matches: &'a MatchSet,
    pub clouds: &'a SemanticClouds,
    pub fp3d: &'a Floorplan3D,
    pub floor: &'a FloorModel,
    pub assignment: Option<&'a FixedWallAssignment>,
}

/// Per-term values of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub geom: f64,
    pub floor: f64,
    pub walls: f64,
}

/// Weighted sum `L = L_geom + λ_floor L_floor + λ_walls L_walls`.
///
/// Terms with a zero weight are skipped entirely (and reported as zero),
/// which makes the total equal the geometric term exactly when both λ are
/// zero.
pub fn total_loss(
    state: &LossState,
    poses: &[Pose],
    config: &BAConfig,
) -> (LossTerms, PoseGradients) {
    let (geom, mut grads) = geometric_loss(state.matches, poses);

    let floor = if config.lambda_floor > 0.0 {
        let (value, g) = floor_loss(state.clouds, poses, state.floor);
        grads.add_scaled(&g, config.lambda_floor);
        value
    } else {
        0.0
    };

    let walls = if config.lambda_walls > 0.0 {
        let (value, g) = match config.walls_strategy {
            WallsStrategy::NearestPoint => {
                walls_loss_nearest_point(state.clouds, poses, state.fp3d)
            }
            WallsStrategy::IterativeNearestWall => {
                walls_loss_iterative_nearest_wall(state.clouds, poses, state.fp3d)
            }
            WallsStrategy::FixedNearestWall => match state.assignment {
                Some(a) => walls_loss_fixed_nearest_wall(state.clouds, poses, a, state.fp3d),
                None => (0.0, PoseGradients::zeros(poses.len())),
            },
        };
        grads.add_scaled(&g, config.lambda_walls);
        value
    } else {
        0.0
    };

    let total = geom + config.lambda_floor * floor + config.lambda_walls * walls;
    (
        LossTerms {
            total,
            geom,
            floor,
            walls,
        },
        grads,
    )
}
