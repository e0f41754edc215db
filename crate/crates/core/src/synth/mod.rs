//! Synthetic ground-truth scenes: multi-room floorplans rendered into
//! depth and label images along a camera trajectory, with landmarks,
//! keypoint matches and pose-drift perturbation. Everything the pipeline
//! consumes can be produced here with known ground truth.

mod render;

pub use render::{render_frame, SceneGeometry};

use crate::ba::{MatchPair, MatchSet};
use crate::error::{Error, Result};
use crate::geometry::{project_point, CameraIntrinsics, Pose};
use crate::io::{Floorplan2D, FloorplanSegment, Frame, KeypointMatch};
use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Axis-aligned furniture box.
#[derive(Debug, Clone, Copy)]
pub struct FurnitureBox {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

/// Everything needed to generate a scene.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub floorplan: Floorplan2D,
    pub ceiling_height: f64,
    pub boxes: Vec<FurnitureBox>,
    pub intrinsics: CameraIntrinsics,
    pub image_width: usize,
    pub image_height: usize,
    pub n_frames: usize,
    /// Camera positions to interpolate between (y is the camera height).
    pub waypoints: Vec<Vector3<f64>>,
    /// Full horizontal camera revolutions over the trajectory.
    pub spins: f64,
    /// Downward pitch component of the viewing direction.
    pub look_down: f64,
    pub n_landmarks: usize,
    /// Gaussian noise on ray depth before quantization (meters).
    pub depth_noise_sigma: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// A three-room apartment along the x axis with door openings in the
    /// partition walls and one furniture box per room.
    pub fn three_rooms(seed: u64) -> Self {
        SceneSpec {
            floorplan: three_room_plan(),
            ceiling_height: 2.5,
            boxes: vec![
                FurnitureBox {
                    min: Vector3::new(0.6, 0.0, 0.5),
                    max: Vector3::new(1.4, 0.7, 1.2),
                },
                FurnitureBox {
                    min: Vector3::new(4.1, 0.0, 2.9),
                    max: Vector3::new(4.9, 0.8, 3.5),
                },
                FurnitureBox {
                    min: Vector3::new(7.4, 0.0, 0.6),
                    max: Vector3::new(8.2, 0.6, 1.3),
                },
            ],
            intrinsics: CameraIntrinsics::new(110.0, 110.0, 80.0, 60.0, 0.001).unwrap(),
            image_width: 160,
            image_height: 120,
            n_frames: 100,
            waypoints: vec![
                Vector3::new(1.5, 1.4, 2.0),
                Vector3::new(4.5, 1.4, 1.6),
                Vector3::new(7.3, 1.4, 2.2),
                Vector3::new(4.5, 1.4, 2.4),
                Vector3::new(1.7, 1.4, 1.8),
            ],
            spins: 2.0,
            look_down: 0.35,
            n_landmarks: 220,
            depth_noise_sigma: 0.0,
            seed,
        }
    }
}

/// 9 x 4 m, three rooms separated by partition walls with door gaps.
/// The gap widths and a wall stub in the first room break the 180-degree
/// symmetry of the outer rectangle, keeping the yaw unambiguous.
pub fn three_room_plan() -> Floorplan2D {
    let seg = |u1: f64, v1: f64, u2: f64, v2: f64| FloorplanSegment { u1, v1, u2, v2 };
    Floorplan2D::new(vec![
        // Outer walls.
        seg(0.0, 0.0, 9.0, 0.0),
        seg(9.0, 0.0, 9.0, 4.0),
        seg(9.0, 4.0, 0.0, 4.0),
        seg(0.0, 4.0, 0.0, 0.0),
        // Partitions with door gaps of different widths.
        seg(3.0, 0.0, 3.0, 1.4),
        seg(3.0, 2.4, 3.0, 4.0),
        seg(6.0, 0.0, 6.0, 1.8),
        seg(6.0, 2.6, 6.0, 4.0),
        // Wall stub in room one.
        seg(0.0, 2.8, 1.1, 2.8),
    ])
    .unwrap()
}

/// Ground truth of a generated scene.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub floorplan: Floorplan2D,
    pub ceiling_height: f64,
    pub boxes: Vec<FurnitureBox>,
    pub intrinsics: CameraIntrinsics,
    pub trajectory: Vec<Pose>,
    pub landmarks: Vec<Vector3<f64>>,
    /// Frame indices each landmark is visible in (ascending).
    pub visibility: Vec<Vec<usize>>,
}

/// Camera-to-world pose at `origin` looking toward `target` with zero
/// roll (camera x right, y down, z forward; world y up).
pub fn look_at_pose(origin: &Vector3<f64>, target: &Vector3<f64>) -> Pose {
    let f = (target - origin).normalize();
    let mut r = f.cross(&Vector3::y());
    if r.norm() < 1e-9 {
        r = Vector3::x();
    }
    let r = r.normalize();
    let d = f.cross(&r);
    let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[r, d, f]));
    Pose::new(UnitQuaternion::from_rotation_matrix(&rot), *origin)
}

/// Generate the ground-truth trajectory, landmarks and rendered frames.
pub fn generate_scene(spec: &SceneSpec) -> Result<(SyntheticScene, Vec<Frame>)> {
    if spec.waypoints.is_empty() || spec.n_frames == 0 {
        return Err(Error::InvalidParameter(
            "scene needs waypoints and at least one frame".into(),
        ));
    }

    let trajectory = build_trajectory(spec)?;
    let scene_geom = render::SceneGeometry::new(
        &spec.floorplan,
        spec.ceiling_height,
        &spec.boxes,
    );

    let frames: Vec<Frame> = trajectory
        .par_iter()
        .enumerate()
        .map(|(i, pose)| {
            render::render_frame(
                &scene_geom,
                pose,
                &spec.intrinsics,
                spec.image_width,
                spec.image_height,
                spec.depth_noise_sigma,
                spec.seed ^ ((i as u64) << 20),
                i,
            )
        })
        .collect();

    let (landmarks, visibility) = place_landmarks(spec, &scene_geom, &trajectory);
    let scene = SyntheticScene {
        floorplan: spec.floorplan.clone(),
        ceiling_height: spec.ceiling_height,
        boxes: spec.boxes.clone(),
        intrinsics: spec.intrinsics,
        trajectory,
        landmarks,
        visibility,
    };
    Ok((scene, frames))
}

fn build_trajectory(spec: &SceneSpec) -> Result<Vec<Pose>> {
    let n = spec.n_frames;
    let mut poses = Vec::with_capacity(n);
    let legs = spec.waypoints.len() - 1;
    for i in 0..n {
        let s = if n == 1 {
            0.0
        } else {
            i as f64 / (n - 1) as f64 * legs.max(1) as f64
        };
        let leg = (s.floor() as usize).min(legs.saturating_sub(1));
        let frac = s - leg as f64;
        let pos = if legs == 0 {
            spec.waypoints[0]
        } else {
            spec.waypoints[leg] * (1.0 - frac) + spec.waypoints[leg + 1] * frac
        };

        for b in &spec.boxes {
            if pos.x > b.min.x
                && pos.x < b.max.x
                && pos.y > b.min.y
                && pos.y < b.max.y
                && pos.z > b.min.z
                && pos.z < b.max.z
            {
                return Err(Error::InvalidParameter(format!(
                    "trajectory pose {i} is inside a furniture box"
                )));
            }
        }
        if !(pos.y > 0.0 && pos.y < spec.ceiling_height) {
            return Err(Error::InvalidParameter(format!(
                "trajectory pose {i} is outside the room height"
            )));
        }

        let phi = 2.0 * std::f64::consts::PI * spec.spins * i as f64 / n.max(1) as f64;
        let dir = Vector3::new(phi.cos(), -spec.look_down, phi.sin());
        poses.push(look_at_pose(&pos, &(pos + dir)));
    }
    Ok(poses)
}

fn place_landmarks(
    spec: &SceneSpec,
    geom: &render::SceneGeometry,
    trajectory: &[Pose],
) -> (Vec<Vector3<f64>>, Vec<Vec<usize>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e3779b97f4a7c15);
    let mut landmarks = Vec::new();
    let mut visibility = Vec::new();

    // Candidate points on walls and floor, kept when co-visible from at
    // least two frames.
    let mut attempts = 0;
    while landmarks.len() < spec.n_landmarks && attempts < spec.n_landmarks * 40 {
        attempts += 1;
        let p = if rng.gen_bool(0.6) {
            // On a wall.
            let seg = &spec.floorplan.segments[rng.gen_range(0..spec.floorplan.segments.len())];
            let t: f64 = rng.gen_range(0.0..1.0);
            Vector3::new(
                seg.u1 + t * (seg.u2 - seg.u1),
                rng.gen_range(0.2..spec.ceiling_height - 0.2),
                seg.v1 + t * (seg.v2 - seg.v1),
            )
        } else {
            // On the floor, inside the plan bounding box.
            let (lo, hi) = plan_bbox(&spec.floorplan);
            Vector3::new(
                rng.gen_range(lo.0..hi.0),
                0.0,
                rng.gen_range(lo.1..hi.1),
            )
        };

        let frames: Vec<usize> = trajectory
            .iter()
            .enumerate()
            .filter(|(_, pose)| {
                landmark_visible(
                    &p,
                    pose,
                    geom,
                    &spec.intrinsics,
                    spec.image_width,
                    spec.image_height,
                )
            })
            .map(|(i, _)| i)
            .collect();
        if frames.len() >= 2 {
            landmarks.push(p);
            visibility.push(frames);
        }
    }
    (landmarks, visibility)
}

fn plan_bbox(fp: &Floorplan2D) -> ((f64, f64), (f64, f64)) {
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for s in &fp.segments {
        for (u, v) in [(s.u1, s.v1), (s.u2, s.v2)] {
            lo.0 = lo.0.min(u);
            lo.1 = lo.1.min(v);
            hi.0 = hi.0.max(u);
            hi.1 = hi.1.max(v);
        }
    }
    (lo, hi)
}

/// A landmark is visible when it projects inside the image with positive
/// depth and no scene surface occludes it.
pub fn landmark_visible(
    p: &Vector3<f64>,
    pose: &Pose,
    geom: &render::SceneGeometry,
    intr: &CameraIntrinsics,
    width: usize,
    height: usize,
) -> bool {
    let cam = pose.inverse().transform_point(p);
    if cam.z < 0.1 {
        return false;
    }
    let Ok((u, v)) = project_point(&cam, intr) else {
        return false;
    };
    if !(u >= 0.0 && u < width as f64 && v >= 0.0 && v < height as f64) {
        return false;
    }
    let origin = pose.translation();
    let dir = p - origin;
    let dist = dir.norm();
    match geom.cast_ray(origin, &(dir / dist)) {
        Some(hit) => hit.t >= dist - 1e-6,
        None => true,
    }
}

/// Per-step drift magnitudes for the random-walk pose perturbation.
#[derive(Debug, Clone, Copy)]
pub struct DriftSpec {
    /// Per-step rotation noise, radians (std per axis).
    pub sigma_rot: f64,
    /// Per-step translation noise, meters (std per axis).
    pub sigma_t: f64,
}

/// Compose a cumulative random-walk drift onto the trajectory: the first
/// pose is unchanged and the drift grows with the step index.
pub fn perturb_poses(trajectory: &[Pose], drift: &DriftSpec, seed: u64) -> Vec<Pose> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trajectory.len());
    let mut accum = Pose::identity();
    for (i, pose) in trajectory.iter().enumerate() {
        if i > 0 {
            let dt = Vector3::new(
                gauss(&mut rng) * drift.sigma_t,
                gauss(&mut rng) * drift.sigma_t,
                gauss(&mut rng) * drift.sigma_t,
            );
            let dr = Vector3::new(
                gauss(&mut rng) * drift.sigma_rot,
                gauss(&mut rng) * drift.sigma_rot,
                gauss(&mut rng) * drift.sigma_rot,
            );
            let delta = Pose::new(UnitQuaternion::from_scaled_axis(dr), dt);
            accum = delta.compose(&accum);
        }
        out.push(accum.compose(pose));
    }
    out
}

/// Box-Muller, seeded, no external dependency in the hot path.
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Project every landmark into each pair of frames it is co-visible in.
/// Adds `pixel_noise` (std, per coordinate), then rewires a
/// `mismatch_fraction` of the pairs to a wrong landmark.
pub fn synth_matches(
    scene: &SyntheticScene,
    pixel_noise: f64,
    mismatch_fraction: f64,
    seed: u64,
) -> Vec<KeypointMatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5bf03635);
    let mut matches = Vec::new();

    let project = |landmark: &Vector3<f64>, frame: usize, rng: &mut ChaCha8Rng| {
        let cam = scene.trajectory[frame].inverse().transform_point(landmark);
        let (u, v) = project_point(&cam, &scene.intrinsics).expect("visible landmark");
        (
            u + gauss(rng) * pixel_noise,
            v + gauss(rng) * pixel_noise,
        )
    };

    let mut landmark_of = Vec::new();
    for (li, frames) in scene.visibility.iter().enumerate() {
        for ai in 0..frames.len() {
            for bi in ai + 1..frames.len() {
                let (fa, fb) = (frames[ai], frames[bi]);
                let (ua, va) = project(&scene.landmarks[li], fa, &mut rng);
                let (ub, vb) = project(&scene.landmarks[li], fb, &mut rng);
                matches.push(KeypointMatch {
                    frame_a: fa,
                    ua,
                    va,
                    frame_b: fb,
                    ub,
                    vb,
                });
                landmark_of.push(li);
            }
        }
    }

    // Rewire an exact fraction of matches to a wrong landmark visible in
    // the same frame.
    let n_wrong = (mismatch_fraction * matches.len() as f64).round() as usize;
    if n_wrong > 0 && scene.landmarks.len() > 1 {
        let mut order: Vec<usize> = (0..matches.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let mut rewired = 0usize;
        for &mi in order.iter() {
            if rewired == n_wrong {
                break;
            }
            let li = landmark_of[mi];
            let frame_b = matches[mi].frame_b;
            let candidates: Vec<usize> = (0..scene.landmarks.len())
                .filter(|&lj| lj != li && scene.visibility[lj].contains(&frame_b))
                .collect();
            if candidates.is_empty() {
                continue;
            }
            let lj = candidates[rng.gen_range(0..candidates.len())];
            let cam = scene.trajectory[frame_b]
                .inverse()
                .transform_point(&scene.landmarks[lj]);
            let (u, v) = project_point(&cam, &scene.intrinsics).expect("visible");
            matches[mi].ub = u;
            matches[mi].vb = v;
            rewired += 1;
        }
    }
    matches
}

/// Landmark-exact match pairs in camera coordinates (no pixel grid, no
/// depth quantization): the consistency reference for the geometric term.
pub fn exact_match_set(scene: &SyntheticScene) -> MatchSet {
    let mut pairs = Vec::new();
    for (li, frames) in scene.visibility.iter().enumerate() {
        for ai in 0..frames.len() {
            for bi in ai + 1..frames.len() {
                let (fa, fb) = (frames[ai], frames[bi]);
                pairs.push(MatchPair {
                    frame_a: fa as u32,
                    cam_a: scene.trajectory[fa]
                        .inverse()
                        .transform_point(&scene.landmarks[li]),
                    frame_b: fb as u32,
                    cam_b: scene.trajectory[fb]
                        .inverse()
                        .transform_point(&scene.landmarks[li]),
                });
            }
        }
    }
    MatchSet { pairs }
}

/// Materialize a scene directory in the on-disk formats: manifest,
/// perturbed trajectory (the "tracked" poses), ground-truth trajectory,
/// matches, floorplan and the depth/label grids.
pub fn write_scene(
    dir: impl AsRef<std::path::Path>,
    scene: &SyntheticScene,
    frames: &[Frame],
    perturbed: &[Pose],
    matches: &[KeypointMatch],
) -> Result<()> {
    use crate::io;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("depth")).map_err(|e| Error::io(dir, e))?;
    std::fs::create_dir_all(dir.join("labels")).map_err(|e| Error::io(dir, e))?;

    let mut manifest_frames = Vec::with_capacity(frames.len());
    for frame in frames {
        let dp = format!("depth/{:06}.d16", frame.index);
        let lp = format!("labels/{:06}.l8", frame.index);
        io::write_depth_grid(&frame.depth, dir.join(&dp))?;
        io::write_label_grid(&frame.labels, dir.join(&lp))?;
        manifest_frames.push((frame.index, dp.into(), lp.into()));
    }
    io::write_manifest(
        &io::SceneManifest {
            intrinsics: scene.intrinsics,
            frames: manifest_frames,
        },
        dir.join("manifest.txt"),
    )?;

    let indexed = |poses: &[Pose]| -> Vec<(usize, Pose)> {
        poses.iter().copied().enumerate().collect()
    };
    io::write_trajectory(&indexed(perturbed), dir.join("trajectory.txt"))?;
    io::write_trajectory(&indexed(&scene.trajectory), dir.join("gt_trajectory.txt"))?;
    io::write_matches(matches, dir.join("matches.txt"))?;
    io::write_floorplan(&scene.floorplan, dir.join("floorplan.txt"))?;
    Ok(())
}

/// Root-mean-square translation error between two equal-length
/// trajectories, without any alignment.
pub fn ate_rmse(estimate: &[Pose], ground_truth: &[Pose]) -> f64 {
    assert_eq!(estimate.len(), ground_truth.len());
    let sum: f64 = estimate
        .iter()
        .zip(ground_truth)
        .map(|(e, g)| (e.translation() - g.translation()).norm_squared())
        .sum();
    (sum / estimate.len() as f64).sqrt()
}

/// ATE after the optimal rigid alignment of the estimated trajectory to
/// the ground truth (the standard trajectory-evaluation protocol): the
/// global placement is unobservable to the refinement, so it is removed
/// before measuring.
pub fn ate_rmse_aligned(estimate: &[Pose], ground_truth: &[Pose]) -> f64 {
    assert_eq!(estimate.len(), ground_truth.len());
    let n = estimate.len() as f64;
    let mean_e: Vector3<f64> = estimate.iter().map(|p| p.translation()).sum::<Vector3<f64>>() / n;
    let mean_g: Vector3<f64> = ground_truth
        .iter()
        .map(|p| p.translation())
        .sum::<Vector3<f64>>()
        / n;

    let mut cov = nalgebra::Matrix3::<f64>::zeros();
    for (e, g) in estimate.iter().zip(ground_truth) {
        cov += (g.translation() - mean_g) * (e.translation() - mean_e).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("svd"), svd.v_t.expect("svd"));
    let mut s = nalgebra::Matrix3::<f64>::identity();
    if (u * v_t).determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let rot = u * s * v_t;

    let sum: f64 = estimate
        .iter()
        .zip(ground_truth)
        .map(|(e, g)| {
            let mapped = rot * (e.translation() - mean_e) + mean_g;
            (mapped - g.translation()).norm_squared()
        })
        .sum();
    (sum / n).sqrt()
}
