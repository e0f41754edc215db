//! Reconstruction quality metrics: MME, MPV, MOM, NND and NSD.
//!
//! MME and MPV are no-reference surface metrics over radius
//! neighborhoods; MOM restricts the plane-variance statistic to three
//! mutually orthogonal planes extracted per frame; NND compares against a
//! reference scan; NSD measures horizontal distance from wall points to
//! the floorplan segments.

use crate::error::{Error, Result};
use crate::floorplan::nearest_segment_distance;
use crate::geometry::{fit_plane, KdTree, PointCloud, Pose};
use crate::io::{Floorplan2D, Frame};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;

/// Default neighborhood radius for MME / MPV / MOM (meters).
pub const DEFAULT_RADIUS: f64 = 0.1;
const MIN_NEIGHBORS: usize = 5;

/// Mean map entropy: the average Gaussian differential entropy
/// `0.5·ln((2πe)³·det Σ)` of the radius-neighborhood covariance.
///
/// Points with fewer than 5 neighbors or a degenerate covariance are
/// skipped; it is an error when nothing remains.
pub fn mme(cloud: &PointCloud, radius: f64) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let tree = KdTree::build(&cloud.points);
    let entropies: Vec<f64> = cloud
        .points
        .par_iter()
        .filter_map(|p| {
            let neigh = tree.within_radius(p, radius);
            if neigh.len() < MIN_NEIGHBORS {
                return None;
            }
            let det = neighborhood_covariance(&cloud.points, &neigh).determinant();
            if det <= 1e-300 {
                return None;
            }
            let two_pi_e = 2.0 * std::f64::consts::PI * std::f64::consts::E;
            Some(0.5 * (two_pi_e.powi(3) * det).ln())
        })
        .collect();
    if entropies.is_empty() {
        return Err(Error::Metric(
            "mme: no point has a valid neighborhood".into(),
        ));
    }
    Ok(entropies.iter().sum::<f64>() / entropies.len() as f64)
}

/// Mean plane variance: per point, the variance of the signed distances
/// of its radius neighborhood to the total-least-squares plane of that
/// neighborhood; averaged over points.
pub fn mpv(cloud: &PointCloud, radius: f64) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let tree = KdTree::build(&cloud.points);
    let variances: Vec<f64> = cloud
        .points
        .par_iter()
        .filter_map(|p| {
            let neigh = tree.within_radius(p, radius);
            plane_variance(&cloud.points, &neigh)
        })
        .collect();
    if variances.is_empty() {
        return Err(Error::Metric(
            "mpv: no point has a valid neighborhood".into(),
        ));
    }
    Ok(variances.iter().sum::<f64>() / variances.len() as f64)
}

fn neighborhood_covariance(points: &[Vector3<f64>], idx: &[usize]) -> Matrix3<f64> {
    let mut mean = Vector3::zeros();
    for &i in idx {
        mean += points[i];
    }
    mean /= idx.len() as f64;
    let mut cov = Matrix3::zeros();
    for &i in idx {
        let d = points[i] - mean;
        cov += d * d.transpose();
    }
    cov / (idx.len() as f64 - 1.0)
}

fn plane_variance(points: &[Vector3<f64>], idx: &[usize]) -> Option<f64> {
    if idx.len() < MIN_NEIGHBORS {
        return None;
    }
    let neigh: Vec<Vector3<f64>> = idx.iter().map(|&i| points[i]).collect();
    let plane = fit_plane(&neigh).ok()?;
    let mean: f64 = neigh.iter().map(|p| plane.signed_distance(p)).sum::<f64>() / neigh.len() as f64;
    let var = neigh
        .iter()
        .map(|p| {
            let d = plane.signed_distance(p) - mean;
            d * d
        })
        .sum::<f64>()
        / neigh.len() as f64;
    Some(var)
}

/// MOM parameters: sequential RANSAC settings for the per-frame
/// extraction of three mutually orthogonal planes.
#[derive(Debug, Clone, Copy)]
pub struct MomParams {
    pub ransac_iterations: usize,
    /// RANSAC inlier threshold (meters).
    pub inlier_threshold: f64,
    pub min_inliers: usize,
    /// Mutual-orthogonality tolerance (radians).
    pub orthogonality_tol: f64,
    /// Pixel stride for the per-frame backprojection.
    pub stride: usize,
    pub seed: u64,
}

impl Default for MomParams {
    fn default() -> Self {
        MomParams {
            ransac_iterations: 120,
            inlier_threshold: 0.01,
            min_inliers: 50,
            orthogonality_tol: 5f64.to_radians(),
            stride: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MomDiagnostics {
    pub frames_used: usize,
    pub frames_skipped: usize,
}

/// Mutually orthogonal metric: the plane-variance statistic evaluated
/// only at points lying on three mutually orthogonal planes extracted
/// from each frame independently, against neighborhoods of the full
/// cloud.
pub fn mom(
    frames: &[Frame],
    poses: &[Pose],
    cloud: &PointCloud,
    radius: f64,
    params: &MomParams,
) -> Result<(f64, MomDiagnostics)> {
    if frames.len() != poses.len() {
        return Err(Error::CountMismatch {
            what: "poses vs frames".into(),
            expected: frames.len(),
            got: poses.len(),
        });
    }
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let tree = KdTree::build(&cloud.points);

    let per_frame: Vec<Option<Vec<f64>>> = frames
        .par_iter()
        .zip(poses.par_iter())
        .map(|(frame, pose)| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ (frame.index as u64) << 1);
            let points = frame_world_points(frame, pose, params.stride);
            let planes = orthogonal_planes(&points, params, &mut rng)?;
            let mut vars = Vec::new();
            for idx_set in &planes {
                for &i in idx_set {
                    let neigh = tree.within_radius(&points[i], radius);
                    if let Some(v) = plane_variance(&cloud.points, &neigh) {
                        vars.push(v);
                    }
                }
            }
            if vars.is_empty() {
                None
            } else {
                Some(vars)
            }
        })
        .collect();

    let mut diag = MomDiagnostics::default();
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in per_frame.into_iter() {
        match v {
            Some(vars) => {
                diag.frames_used += 1;
                count += vars.len();
                sum += vars.iter().sum::<f64>();
            }
            None => diag.frames_skipped += 1,
        }
    }
    if diag.frames_used == 0 {
        return Err(Error::Metric(
            "mom: no frame exposes three mutually orthogonal planes".into(),
        ));
    }
    Ok((sum / count as f64, diag))
}

fn frame_world_points(frame: &Frame, pose: &Pose, stride: usize) -> Vec<Vector3<f64>> {
    let mut out = Vec::new();
    for row in (0..frame.depth.height).step_by(stride.max(1)) {
        for col in (0..frame.depth.width).step_by(stride.max(1)) {
            let raw = frame.depth.at(row, col);
            if raw == 0 {
                continue;
            }
            let cam = crate::geometry::backproject_pixel(
                col as f64,
                row as f64,
                raw,
                &frame.intrinsics,
            )
            .expect("raw > 0");
            out.push(pose.transform_point(&cam));
        }
    }
    out
}

/// Sequential RANSAC for up to three mutually orthogonal planes; returns
/// the per-plane inlier index sets, or None when fewer than three planes
/// qualify.
fn orthogonal_planes(
    points: &[Vector3<f64>],
    params: &MomParams,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<Vec<usize>>> {
    let ortho_cos = params.orthogonality_tol.sin();
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut found_normals: Vec<Vector3<f64>> = Vec::new();
    let mut found_inliers: Vec<Vec<usize>> = Vec::new();

    for _ in 0..3 {
        if remaining.len() < params.min_inliers {
            return None;
        }
        let mut best: Option<(Vec<usize>, Vector3<f64>)> = None;
        for _ in 0..params.ransac_iterations {
            let a = points[remaining[rng.gen_range(0..remaining.len())]];
            let b = points[remaining[rng.gen_range(0..remaining.len())]];
            let c = points[remaining[rng.gen_range(0..remaining.len())]];
            let normal = (b - a).cross(&(c - a));
            let len = normal.norm();
            if len < 1e-9 {
                continue;
            }
            let normal = normal / len;
            // Candidate must be orthogonal to every accepted plane.
            if found_normals
                .iter()
                .any(|n| n.dot(&normal).abs() > ortho_cos)
            {
                continue;
            }
            let d = -normal.dot(&a);
            let inliers: Vec<usize> = remaining
                .iter()
                .copied()
                .filter(|&i| (normal.dot(&points[i]) + d).abs() <= params.inlier_threshold)
                .collect();
            if inliers.len() >= params.min_inliers
                && best.as_ref().map_or(true, |(bi, _)| inliers.len() > bi.len())
            {
                best = Some((inliers, normal));
            }
        }
        let (inliers, normal) = best?;
        remaining.retain(|i| !inliers.contains(i));
        found_normals.push(normal);
        found_inliers.push(inliers);
    }
    Some(found_inliers)
}

/// Mean distance from each reconstructed point to its nearest reference
/// point (directional: reconstruction to reference).
pub fn nnd(recon: &PointCloud, reference: &PointCloud) -> Result<f64> {
    if recon.is_empty() || reference.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let tree = KdTree::build(&reference.points);
    // Collect before summing: a parallel sum would reduce in a
    // thread-dependent order and break byte-level reproducibility.
    let dists: Vec<f64> = recon
        .points
        .par_iter()
        .map(|p| tree.nearest(p).map(|(_, d2)| d2.sqrt()).unwrap_or(0.0))
        .collect();
    Ok(dists.iter().sum::<f64>() / recon.len() as f64)
}

/// Mean horizontal distance from wall points to their nearest floorplan
/// segments.
pub fn nsd(walls: &PointCloud, fp: &Floorplan2D) -> Result<f64> {
    if walls.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let dists: Vec<f64> = walls
        .points
        .par_iter()
        .map(|p| nearest_segment_distance(p.x, p.z, fp))
        .collect();
    Ok(dists.iter().sum::<f64>() / walls.len() as f64)
}

/// All metric values of one evaluation, plus the parameters used.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub mme: Option<f64>,
    pub mpv: Option<f64>,
    pub mom: Option<f64>,
    pub nnd: Option<f64>,
    pub nsd: Option<f64>,
    pub radius: f64,
    pub mom_frames_used: usize,
    pub mom_frames_skipped: usize,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let kv = |k: &str, v: &Option<f64>| match v {
            Some(x) => format!("{k}: {x}\n"),
            None => format!("{k}: absent\n"),
        };
        out.push_str(&kv("mme", &self.mme));
        out.push_str(&kv("mpv", &self.mpv));
        out.push_str(&kv("mom", &self.mom));
        out.push_str(&kv("nnd", &self.nnd));
        out.push_str(&kv("nsd", &self.nsd));
        out.push_str(&format!("radius: {}\n", self.radius));
        out.push_str(&format!("mom_frames_used: {}\n", self.mom_frames_used));
        out.push_str(&format!(
            "mom_frames_skipped: {}\n",
            self.mom_frames_skipped
        ));
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.render().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}
