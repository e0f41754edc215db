//! The 3D floorplan model: wall segments extruded between the scan's
//! vertical extent, point-sampled for nearest-neighbor pulling, with one
//! analytic vertical plane per wall.

use crate::error::{Error, Result};
use crate::geometry::{KdTree, Plane};
use crate::io::{Floorplan2D, FloorplanSegment};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default sampling density, points per square meter of wall.
pub const DEFAULT_DENSITY: f64 = 500.0;

/// One extruded wall: the rectangle corners, the vertical plane containing
/// it, and the source segment (in meters, x = u, z = v).
#[derive(Debug, Clone)]
pub struct WallRect {
    pub corners: [Vector3<f64>; 4],
    pub plane: Plane,
    pub segment: FloorplanSegment,
}

/// Extruded, point-sampled floorplan with per-wall analytic planes.
#[derive(Debug, Clone)]
pub struct Floorplan3D {
    pub walls: Vec<WallRect>,
    /// Uniform samples over all wall rectangles.
    pub points: Vec<Vector3<f64>>,
    /// Wall index per sampled point.
    pub point_wall: Vec<u32>,
    pub y_min: f64,
    pub y_max: f64,
    tree: KdTree,
}

impl Floorplan3D {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }
}

/// Build the 3D floorplan: extrude each segment between `y_min` and
/// `y_max` and sample `⌈area·density⌉` points per rectangle, uniformly
/// i.i.d. from a generator seeded with `seed`.
pub fn build_floorplan3d(
    fp: &Floorplan2D,
    y_min: f64,
    y_max: f64,
    density: f64,
    seed: u64,
) -> Result<Floorplan3D> {
    if fp.segments.is_empty() {
        return Err(Error::EmptyFloorplan);
    }
    if !(y_min < y_max) {
        return Err(Error::InvalidParameter(format!(
            "need y_min < y_max, got {y_min} and {y_max}"
        )));
    }
    if !(density > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sampling density must be positive, got {density}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut walls = Vec::with_capacity(fp.segments.len());
    let mut points = Vec::new();
    let mut point_wall = Vec::new();

    for (wall_idx, seg) in fp.segments.iter().enumerate() {
        let a = Vector3::new(seg.u1, 0.0, seg.v1);
        let dir = Vector3::new(seg.u2 - seg.u1, 0.0, seg.v2 - seg.v1);
        let len = dir.norm();
        // Horizontal normal perpendicular to the segment.
        let normal = Vector3::new(dir.z, 0.0, -dir.x) / len;
        let plane = Plane::from_normal_point(normal, &a)?;
        let corners = [
            Vector3::new(seg.u1, y_min, seg.v1),
            Vector3::new(seg.u1, y_max, seg.v1),
            Vector3::new(seg.u2, y_min, seg.v2),
            Vector3::new(seg.u2, y_max, seg.v2),
        ];
        let count = (len * (y_max - y_min) * density).ceil() as usize;
        for _ in 0..count {
            let t: f64 = rng.gen_range(0.0..=1.0);
            let y: f64 = rng.gen_range(y_min..=y_max);
            let mut p = a + dir * t;
            p.y = y;
            points.push(p);
            point_wall.push(wall_idx as u32);
        }
        walls.push(WallRect {
            corners,
            plane,
            segment: *seg,
        });
    }

    let tree = KdTree::build(&points);
    Ok(Floorplan3D {
        walls,
        points,
        point_wall,
        y_min,
        y_max,
        tree,
    })
}

/// Exact nearest sampled floorplan point: returns the point, its wall
/// index and the distance. Ties go to the lowest point index.
pub fn nearest_floorplan_point(
    p: &Vector3<f64>,
    fp3d: &Floorplan3D,
) -> Result<(Vector3<f64>, usize, f64)> {
    let (idx, d2) = fp3d
        .tree
        .nearest(p)
        .ok_or(Error::EmptyFloorplan)?;
    Ok((
        fp3d.points[idx],
        fp3d.point_wall[idx] as usize,
        d2.sqrt(),
    ))
}

/// Exact 2D distance from `(x, z)` to the closest floorplan segment.
pub fn nearest_segment_distance(x: f64, z: f64, fp: &Floorplan2D) -> f64 {
    fp.segments
        .iter()
        .map(|s| point_segment_distance(x, z, s))
        .fold(f64::INFINITY, f64::min)
}

/// Exact 2D point-to-segment distance (clamped projection).
pub fn point_segment_distance(x: f64, z: f64, seg: &FloorplanSegment) -> f64 {
    let dx = seg.u2 - seg.u1;
    let dz = seg.v2 - seg.v1;
    let len2 = dx * dx + dz * dz;
    let t = (((x - seg.u1) * dx + (z - seg.v1) * dz) / len2).clamp(0.0, 1.0);
    let px = seg.u1 + t * dx;
    let pz = seg.v1 + t * dz;
    ((x - px).powi(2) + (z - pz).powi(2)).sqrt()
}

/// Analytic distance from a 3D point to a wall rectangle (clamped along
/// the segment and the vertical extent).
pub fn point_rect_distance(p: &Vector3<f64>, wall: &WallRect, y_min: f64, y_max: f64) -> f64 {
    let seg = &wall.segment;
    let dx = seg.u2 - seg.u1;
    let dz = seg.v2 - seg.v1;
    let len2 = dx * dx + dz * dz;
    let t = (((p.x - seg.u1) * dx + (p.z - seg.v1) * dz) / len2).clamp(0.0, 1.0);
    let q = Vector3::new(
        seg.u1 + t * dx,
        p.y.clamp(y_min, y_max),
        seg.v1 + t * dz,
    );
    (p - q).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn one_segment_plan() -> Floorplan2D {
        Floorplan2D::new(vec![FloorplanSegment {
            u1: 0.0,
            v1: 0.0,
            u2: 2.0,
            v2: 0.0,
        }])
        .unwrap()
    }

    fn l_plan() -> Floorplan2D {
        Floorplan2D::new(vec![
            FloorplanSegment {
                u1: 0.0,
                v1: 0.0,
                u2: 5.0,
                v2: 0.0,
            },
            FloorplanSegment {
                u1: 5.0,
                v1: 0.0,
                u2: 5.0,
                v2: 4.0,
            },
            FloorplanSegment {
                u1: 5.0,
                v1: 4.0,
                u2: 0.0,
                v2: 4.0,
            },
        ])
        .unwrap()
    }

    #[test]
    fn sampling_counts_and_bounds() {
        let fp3d = build_floorplan3d(&one_segment_plan(), 0.0, 3.0, 100.0, 7).unwrap();
        assert_eq!(fp3d.points.len(), 600);
        for p in &fp3d.points {
            assert!((0.0..=2.0).contains(&p.x));
            assert_eq!(p.z, 0.0);
            assert!((0.0..=3.0).contains(&p.y));
        }
    }

    #[test]
    fn zero_density_is_error() {
        assert!(build_floorplan3d(&one_segment_plan(), 0.0, 3.0, 0.0, 7).is_err());
    }

    #[test]
    fn seeded_builds_are_identical() {
        let a = build_floorplan3d(&l_plan(), 0.0, 2.5, 200.0, 11).unwrap();
        let b = build_floorplan3d(&l_plan(), 0.0, 2.5, 200.0, 11).unwrap();
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn sampled_points_satisfy_their_wall_plane() {
        let fp3d = build_floorplan3d(&l_plan(), 0.0, 2.5, 300.0, 3).unwrap();
        for (p, &w) in fp3d.points.iter().zip(&fp3d.point_wall) {
            assert!(fp3d.walls[w as usize].plane.distance(p) < 1e-9);
            assert!(fp3d.walls[w as usize].plane.normal().y.abs() < 1e-9);
        }
    }

    #[test]
    fn nearest_point_exact_cases() {
        let fp3d = build_floorplan3d(&one_segment_plan(), 0.0, 3.0, 200.0, 5).unwrap();
        // A sampled point is its own nearest neighbor.
        let q = fp3d.points[17];
        let (got, _, d) = nearest_floorplan_point(&q, &fp3d).unwrap();
        assert_eq!(got, q);
        assert_eq!(d, 0.0);

        // Off-plane query: the answer lies on the wall plane z = 0.
        let (got, wall, d) = nearest_floorplan_point(&Vector3::new(1.0, 1.0, 0.5), &fp3d).unwrap();
        assert_eq!(wall, 0);
        assert_eq!(got.z, 0.0);
        let gap = 2.0 / 200.0f64.sqrt();
        assert!(d <= 0.5 + gap, "distance {d} exceeds 0.5 + sampling gap");
    }

    #[test]
    fn nearest_point_matches_brute_force() {
        let fp3d = build_floorplan3d(&l_plan(), 0.0, 2.5, 150.0, 13).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let q = Vector3::new(
                rng.gen_range(-1.0..6.0),
                rng.gen_range(-0.5..3.0),
                rng.gen_range(-1.0..5.0),
            );
            let (_, _, d) = nearest_floorplan_point(&q, &fp3d).unwrap();
            let mut best = f64::INFINITY;
            let mut best_idx = usize::MAX;
            for (i, p) in fp3d.points.iter().enumerate() {
                let dd = (p - q).norm();
                if dd < best {
                    best = dd;
                    best_idx = i;
                }
            }
            assert_eq!(d, best);
            let (got, _, _) = nearest_floorplan_point(&q, &fp3d).unwrap();
            assert_eq!(got, fp3d.points[best_idx]);
        }
    }

    #[test]
    fn sampling_gap_statistical_bound() {
        let density = 500.0;
        let fp3d = build_floorplan3d(&l_plan(), 0.0, 2.5, density, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut excess: Vec<f64> = Vec::new();
        for _ in 0..2000 {
            let q = Vector3::new(
                rng.gen_range(-1.0..6.0),
                rng.gen_range(0.0..2.5),
                rng.gen_range(-1.0..5.0),
            );
            let (_, _, d) = nearest_floorplan_point(&q, &fp3d).unwrap();
            let analytic = fp3d
                .walls
                .iter()
                .map(|w| point_rect_distance(&q, w, fp3d.y_min, fp3d.y_max))
                .fold(f64::INFINITY, f64::min);
            assert!(d >= analytic - 1e-12);
            excess.push(d - analytic);
        }
        excess.sort_by(f64::total_cmp);
        let p99 = excess[(excess.len() as f64 * 0.99) as usize];
        let bound = 2.0 / density.sqrt();
        assert!(p99 <= bound, "99th percentile gap {p99} exceeds {bound}");
    }

    #[test]
    fn segment_distance_cases() {
        let fp = one_segment_plan();
        assert_eq!(nearest_segment_distance(1.0, 0.0, &fp), 0.0);
        assert!((nearest_segment_distance(1.0, 1.0, &fp) - 1.0).abs() < 1e-15);
        assert!((nearest_segment_distance(3.0, 1.0, &fp) - 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn segment_distance_rigid_invariance() {
        let fp = l_plan();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let theta: f64 = 0.83;
        let (s, c) = theta.sin_cos();
        let (tx, tz) = (3.7, -1.2);
        let rot = |x: f64, z: f64| (c * x - s * z + tx, s * x + c * z + tz);
        let moved = Floorplan2D::new(
            fp.segments
                .iter()
                .map(|sg| {
                    let (u1, v1) = rot(sg.u1, sg.v1);
                    let (u2, v2) = rot(sg.u2, sg.v2);
                    FloorplanSegment { u1, v1, u2, v2 }
                })
                .collect(),
        )
        .unwrap();
        for _ in 0..50 {
            let x = rng.gen_range(-2.0..7.0);
            let z = rng.gen_range(-2.0..6.0);
            let (xr, zr) = rot(x, z);
            let d0 = nearest_segment_distance(x, z, &fp);
            let d1 = nearest_segment_distance(xr, zr, &moved);
            assert!((d0 - d1).abs() < 1e-9);
        }
    }
}
