//! Clustering of the walls cloud into vertical planes and the mutual
//! matching against the floorplan wall planes, producing the fixed
//! point-to-plane assignment.

use super::FixedWallAssignment;
use crate::floorplan::Floorplan3D;
use crate::geometry::{Plane, PointCloud};
use nalgebra::Vector3;

#[derive(Debug, Clone, Copy)]
pub struct ClusterParams {
    /// Angular threshold for grouping normals and for the parallelism
    /// test against floorplan planes (radians).
    pub angle_threshold: f64,
    /// Gap splitting offset sub-clusters along the shared normal (meters).
    pub offset_gap: f64,
    /// Minimum points per wall cluster.
    pub min_points: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            angle_threshold: 10f64.to_radians(),
            offset_gap: 0.3,
            min_points: 30,
        }
    }
}

struct ScanWall {
    plane: Plane,
    centroid: Vector3<f64>,
    members: Vec<u32>,
}

/// Cluster wall points by normal direction, split clusters by offset,
/// fit a vertical plane to each, and match scan planes to floorplan
/// planes where they are mutually nearest and parallel. Points of matched
/// clusters enter the assignment; everything else is left out.
///
/// The walls cloud must carry normals; points with invalid or
/// non-horizontal normals are ignored.
pub fn cluster_walls(
    walls: &PointCloud,
    fp3d: &Floorplan3D,
    params: &ClusterParams,
) -> (FixedWallAssignment, usize) {
    let Some(normals) = walls.normals.as_ref() else {
        return (FixedWallAssignment::default(), 0);
    };

    // Horizontal normal angles of usable points.
    let mut usable: Vec<(u32, f64)> = Vec::new();
    for (i, n) in normals.iter().enumerate() {
        if n.norm_squared() == 0.0 || n.y.abs() > 0.5 {
            continue;
        }
        let len = (n.x * n.x + n.z * n.z).sqrt();
        if len < 1e-9 {
            continue;
        }
        usable.push((i as u32, (n.z / len).atan2(n.x / len)));
    }
    if usable.len() < params.min_points {
        return (FixedWallAssignment::default(), 0);
    }

    // Direction clusters: iterative mode absorption on the angle
    // histogram. Gap-splitting fails here because stray normals bridge
    // the families; taking peaks and absorbing their angular
    // neighborhood is robust to that.
    let direction_clusters = angular_modes(&usable, params.angle_threshold, params.min_points);

    // Offset sub-clusters and vertical plane fits.
    let mut scan_walls: Vec<ScanWall> = Vec::new();
    for cluster in &direction_clusters {
        let mut dir = Vector3::zeros();
        for &i in cluster {
            let n = normals[i as usize];
            dir += Vector3::new(n.x, 0.0, n.z);
        }
        if dir.norm() < 1e-9 {
            continue;
        }
        let dir = dir.normalize();

        let offsets: Vec<(u32, f64)> = cluster
            .iter()
            .map(|&i| (i, walls.points[i as usize].dot(&dir)))
            .collect();
        for members in linear_modes(&offsets, params.offset_gap, params.min_points) {
            if let Some(wall) = fit_vertical_plane(walls, &members) {
                scan_walls.push(wall);
            }
        }
    }

    if scan_walls.is_empty() {
        return (FixedWallAssignment::default(), 0);
    }

    // Mode-absorption leftovers (corner and junction points) form small
    // stray clusters whose planes sit close to real walls and steal the
    // mutual-nearest match from them; keep only clusters that carry a
    // meaningful share of the biggest one.
    let max_size = scan_walls.iter().map(|w| w.members.len()).max().unwrap();
    scan_walls.retain(|w| w.members.len() * 20 >= max_size);

    let cos_thresh = params.angle_threshold.cos();
    let plan_centers: Vec<Vector3<f64>> = fp3d
        .walls
        .iter()
        .map(|w| {
            let s = &w.segment;
            Vector3::new(
                0.5 * (s.u1 + s.u2),
                0.5 * (fp3d.y_min + fp3d.y_max),
                0.5 * (s.v1 + s.v2),
            )
        })
        .collect();

    let parallel = |a: &Plane, b: &Plane| a.normal().dot(b.normal()).abs() >= cos_thresh;

    // Scan wall -> nearest parallel floorplan plane.
    let scan_to_plan: Vec<Option<usize>> = scan_walls
        .iter()
        .map(|sw| {
            fp3d.walls
                .iter()
                .enumerate()
                .filter(|(_, pw)| parallel(&sw.plane, &pw.plane))
                .min_by(|(_, a), (_, b)| {
                    a.plane
                        .distance(&sw.centroid)
                        .total_cmp(&b.plane.distance(&sw.centroid))
                })
                .map(|(j, _)| j)
        })
        .collect();
    // Floorplan plane -> nearest parallel scan wall.
    let plan_to_scan: Vec<Option<usize>> = fp3d
        .walls
        .iter()
        .enumerate()
        .map(|(j, pw)| {
            scan_walls
                .iter()
                .enumerate()
                .filter(|(_, sw)| parallel(&sw.plane, &pw.plane))
                .min_by(|(_, a), (_, b)| {
                    a.plane
                        .distance(&plan_centers[j])
                        .total_cmp(&b.plane.distance(&plan_centers[j]))
                })
                .map(|(i, _)| i)
        })
        .collect();

    let mut pairs: Vec<(u32, u32)> = Vec::new();
    let mut matched_walls = 0usize;
    for (i, sw) in scan_walls.iter().enumerate() {
        let Some(j) = scan_to_plan[i] else { continue };
        if plan_to_scan[j] != Some(i) {
            continue;
        }
        matched_walls += 1;
        for &m in &sw.members {
            pairs.push((m, j as u32));
        }
    }
    pairs.sort_unstable();

    (FixedWallAssignment { pairs }, matched_walls)
}

/// Iterative mode absorption over circular angle data: repeatedly take
/// the most populated 2-degree bin and absorb everything within
/// `halfwidth` of it into one cluster.
fn angular_modes(items: &[(u32, f64)], halfwidth: f64, min_points: usize) -> Vec<Vec<u32>> {
    const NBINS: usize = 180;
    let tau = 2.0 * std::f64::consts::PI;
    let bin_of = |a: f64| {
        let mut a = a % tau;
        if a < 0.0 {
            a += tau;
        }
        ((a / tau * NBINS as f64) as usize).min(NBINS - 1)
    };
    let mut counts = [0usize; NBINS];
    for &(_, a) in items {
        counts[bin_of(a)] += 1;
    }
    let mut taken = vec![false; items.len()];
    let mut clusters = Vec::new();
    loop {
        let peak = (0..NBINS).max_by_key(|&b| counts[b]).unwrap();
        if counts[peak] == 0 {
            break;
        }
        let center = (peak as f64 + 0.5) / NBINS as f64 * tau;
        let mut members = Vec::new();
        for (k, &(i, a)) in items.iter().enumerate() {
            if taken[k] {
                continue;
            }
            let mut d = (a - center).abs() % tau;
            if d > tau / 2.0 {
                d = tau - d;
            }
            if d <= halfwidth {
                taken[k] = true;
                counts[bin_of(a)] -= 1;
                members.push(i);
            }
        }
        if members.len() >= min_points {
            clusters.push(members);
        }
        if clusters.len() > 16 {
            break;
        }
    }
    clusters
}

/// Same idea on linear data (plane offsets along the shared normal).
fn linear_modes(items: &[(u32, f64)], halfwidth: f64, min_points: usize) -> Vec<Vec<u32>> {
    if items.is_empty() {
        return Vec::new();
    }
    let lo = items.iter().map(|&(_, v)| v).fold(f64::INFINITY, f64::min);
    let hi = items
        .iter()
        .map(|&(_, v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let bin_w = (halfwidth / 4.0).max(1e-6);
    let nbins = (((hi - lo) / bin_w).ceil() as usize + 1).max(1);
    let bin_of = |v: f64| (((v - lo) / bin_w) as usize).min(nbins - 1);
    let mut counts = vec![0usize; nbins];
    for &(_, v) in items {
        counts[bin_of(v)] += 1;
    }
    let mut taken = vec![false; items.len()];
    let mut clusters = Vec::new();
    loop {
        let peak = (0..nbins).max_by_key(|&b| counts[b]).unwrap();
        if counts[peak] == 0 {
            break;
        }
        let center = lo + (peak as f64 + 0.5) * bin_w;
        let mut members = Vec::new();
        for (k, &(i, v)) in items.iter().enumerate() {
            if taken[k] {
                continue;
            }
            if (v - center).abs() <= halfwidth {
                taken[k] = true;
                counts[bin_of(v)] -= 1;
                members.push(i);
            }
        }
        if members.len() >= min_points {
            clusters.push(members);
        }
        if clusters.len() > 32 {
            break;
        }
    }
    clusters
}

/// Total-least-squares line fit of the horizontal projection, lifted to a
/// vertical plane.
fn fit_vertical_plane(walls: &PointCloud, members: &[u32]) -> Option<ScanWall> {
    let mut cx = 0.0;
    let mut cz = 0.0;
    let mut centroid = Vector3::zeros();
    for &i in members {
        let p = &walls.points[i as usize];
        cx += p.x;
        cz += p.z;
        centroid += p;
    }
    let n = members.len() as f64;
    cx /= n;
    cz /= n;
    centroid /= n;

    let (mut sxx, mut sxz, mut szz) = (0.0, 0.0, 0.0);
    for &i in members {
        let p = &walls.points[i as usize];
        let dx = p.x - cx;
        let dz = p.z - cz;
        sxx += dx * dx;
        sxz += dx * dz;
        szz += dz * dz;
    }
    // Smallest-eigenvalue eigenvector of the 2x2 covariance.
    let tr = sxx + szz;
    let det = sxx * szz - sxz * sxz;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let lam_min = tr / 2.0 - disc;
    let (nx, nz) = if sxz.abs() > 1e-12 {
        (lam_min - szz, sxz)
    } else if sxx <= szz {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let len = (nx * nx + nz * nz).sqrt();
    if len < 1e-12 {
        return None;
    }
    let normal = Vector3::new(nx / len, 0.0, nz / len);
    let plane = Plane::from_normal_point(normal, &Vector3::new(cx, 0.0, cz)).ok()?;
    Some(ScanWall {
        plane,
        centroid,
        members: members.to_vec(),
    })
}
