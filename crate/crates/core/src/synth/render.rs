//! Analytic ray casting against the scene surfaces: floor, ceiling,
//! extruded wall segments and furniture boxes.

use super::FurnitureBox;
use crate::geometry::{CameraIntrinsics, Pose};
use crate::io::{Floorplan2D, Frame, Grid};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LABEL_OTHER: u8 = 0;
const LABEL_FLOOR: u8 = 1;
const LABEL_WALL: u8 = 2;

struct WallSurf {
    a: Vector3<f64>,
    dir_xz: Vector3<f64>,
    len2: f64,
    normal: Vector3<f64>,
    offset: f64,
}

/// Immutable intersection structures for one scene.
pub struct SceneGeometry {
    walls: Vec<WallSurf>,
    boxes: Vec<FurnitureBox>,
    ceiling: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Hit {
    /// Ray parameter of the hit in the caller's direction scale.
    pub t: f64,
    pub label: u8,
}

impl SceneGeometry {
    pub fn new(fp: &Floorplan2D, ceiling: f64, boxes: &[FurnitureBox]) -> Self {
        let walls = fp
            .segments
            .iter()
            .map(|s| {
                let a = Vector3::new(s.u1, 0.0, s.v1);
                let dir_xz = Vector3::new(s.u2 - s.u1, 0.0, s.v2 - s.v1);
                let len2 = dir_xz.norm_squared();
                let normal = Vector3::new(dir_xz.z, 0.0, -dir_xz.x).normalize();
                WallSurf {
                    a,
                    dir_xz,
                    len2,
                    normal,
                    offset: -normal.dot(&a),
                }
            })
            .collect();
        SceneGeometry {
            walls,
            boxes: boxes.to_vec(),
            ceiling,
        }
    }

    /// Nearest intersection along `origin + t·dir` for t > 1e-6. The ray
    /// direction does not need to be normalized; `t` is reported in its
    /// scale.
    pub fn cast_ray(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        const T_MIN: f64 = 1e-6;
        let mut best: Option<Hit> = None;
        let mut consider = |t: f64, label: u8| {
            if t > T_MIN && best.map_or(true, |b| t < b.t) {
                best = Some(Hit { t, label });
            }
        };

        // Floor y = 0 and ceiling y = h.
        if dir.y.abs() > 1e-12 {
            let t = -origin.y / dir.y;
            consider(t, LABEL_FLOOR);
            let t = (self.ceiling - origin.y) / dir.y;
            consider(t, LABEL_OTHER);
        }

        for w in &self.walls {
            let denom = w.normal.dot(dir);
            if denom.abs() < 1e-12 {
                continue;
            }
            let t = -(w.normal.dot(origin) + w.offset) / denom;
            if t <= T_MIN {
                continue;
            }
            let p = origin + dir * t;
            if p.y < 0.0 || p.y > self.ceiling {
                continue;
            }
            let s = (p - w.a).dot(&w.dir_xz) / w.len2;
            if (0.0..=1.0).contains(&s) {
                consider(t, LABEL_WALL);
            }
        }

        for b in &self.boxes {
            if let Some(t) = ray_box(origin, dir, b) {
                consider(t, LABEL_OTHER);
            }
        }
        best
    }
}

/// Slab-method AABB intersection; returns the entry parameter.
fn ray_box(origin: &Vector3<f64>, dir: &Vector3<f64>, b: &FurnitureBox) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for axis in 0..3 {
        if dir[axis].abs() < 1e-12 {
            if origin[axis] < b.min[axis] || origin[axis] > b.max[axis] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[axis];
        let (t0, t1) = {
            let a = (b.min[axis] - origin[axis]) * inv;
            let c = (b.max[axis] - origin[axis]) * inv;
            if a < c {
                (a, c)
            } else {
                (c, a)
            }
        };
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    if t_far < 0.0 {
        return None;
    }
    Some(if t_near > 0.0 { t_near } else { t_far })
}

/// Render one depth + label frame by casting a ray per pixel. The stored
/// depth is the camera-frame z of the hit, quantized by the intrinsics'
/// depth scale; missing hits and out-of-range depths store zero.
#[allow(clippy::too_many_arguments)]
pub fn render_frame(
    geom: &SceneGeometry,
    pose: &Pose,
    intr: &CameraIntrinsics,
    width: usize,
    height: usize,
    depth_noise_sigma: f64,
    seed: u64,
    frame_index: usize,
) -> Frame {
    let mut depth = Grid::<u16>::new(width, height);
    let mut labels = Grid::<u8>::new(width, height);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = pose.translation();

    for row in 0..height {
        for col in 0..width {
            // Unnormalized direction with camera z = 1: the ray
            // parameter equals the camera-frame depth.
            let dir_cam = Vector3::new(
                (col as f64 - intr.cx) / intr.fx,
                (row as f64 - intr.cy) / intr.fy,
                1.0,
            );
            let dir = pose.rotate_vector(&dir_cam);
            let Some(hit) = geom.cast_ray(origin, &dir) else {
                continue;
            };
            let mut z = hit.t;
            if depth_noise_sigma > 0.0 {
                z += super::gauss(&mut rng) * depth_noise_sigma;
            }
            let raw = (z / intr.depth_scale).round();
            if raw >= 1.0 && raw <= u16::MAX as f64 {
                depth.set(row, col, raw as u16);
                labels.set(row, col, hit.label);
            }
        }
    }

    Frame {
        index: frame_index,
        depth,
        labels,
        intrinsics: *intr,
        initial_pose: *pose,
    }
}
