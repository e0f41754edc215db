//! Scan-to-floorplan alignment: gravity direction, boundary-scan
//! construction and the yaw/scale/shift similarity transform.
//!
//! The transform maps floorplan coordinates into scan coordinates, so the
//! camera poses keep their original metric frame. Scale acts on x and z
//! only; the floorplan height is already tied to the scan's vertical
//! extent when the 3D floorplan is built.

use crate::error::{Error, Result};
use crate::floorplan::Floorplan3D;
use crate::geometry::{KdTree, PointCloud};
use crate::io::{Floorplan2D, FloorplanSegment};
use nalgebra::{UnitQuaternion, Vector3};

/// Histogram bin width for the y-coordinate floor search (meters).
pub const Y_HIST_BIN: f64 = 0.02;
/// Points below floor peak + this margin are removed (meters).
pub const FLOOR_MARGIN: f64 = 0.15;
/// Occupancy-grid cell size for the furniture filter (meters).
pub const OCCUPANCY_CELL: f64 = 0.1;

/// Yaw about the world y-axis, a horizontal scale and a shift, applied to
/// the floorplan. `shift.y` stays zero: the floorplan has no height of
/// its own.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub yaw: f64,
    pub scale: f64,
    pub shift: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            yaw: 0.0,
            scale: 1.0,
            shift: Vector3::zeros(),
        }
    }

    /// Rotate about y by `yaw`, scale x/z, then shift.
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let (x, z) = rotate_xz(p.x, p.z, self.yaw);
        Vector3::new(
            self.scale * x + self.shift.x,
            p.y + self.shift.y,
            self.scale * z + self.shift.z,
        )
    }

    pub fn apply_inverse(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let x = (p.x - self.shift.x) / self.scale;
        let z = (p.z - self.shift.z) / self.scale;
        let (x, z) = rotate_xz(x, z, -self.yaw);
        Vector3::new(x, p.y - self.shift.y, z)
    }

    /// Transform a 2D floorplan into scan coordinates.
    pub fn apply_to_floorplan(&self, fp: &Floorplan2D) -> Floorplan2D {
        let map = |u: f64, v: f64| {
            let (x, z) = rotate_xz(u, v, self.yaw);
            (self.scale * x + self.shift.x, self.scale * z + self.shift.z)
        };
        Floorplan2D {
            segments: fp
                .segments
                .iter()
                .map(|s| {
                    let (u1, v1) = map(s.u1, s.v1);
                    let (u2, v2) = map(s.u2, s.v2);
                    FloorplanSegment { u1, v1, u2, v2 }
                })
                .collect(),
            units_per_meter: fp.units_per_meter,
        }
    }
}

/// Rotation about +y by `yaw`: a direction at angle θ = atan2(z, x) moves
/// to θ - yaw.
fn rotate_xz(x: f64, z: f64, yaw: f64) -> (f64, f64) {
    let (s, c) = yaw.sin_cos();
    (x * c + z * s, -x * s + z * c)
}

/// Estimated gravity direction (unit, pointing down).
#[derive(Debug, Clone, Copy)]
pub struct GravityEstimate {
    pub direction: Vector3<f64>,
    /// Set when no sphere bin clearly dominates (top < 2x runner-up).
    pub low_confidence: bool,
}

/// Estimate gravity by binning scan normals on a subdivided icosphere and
/// taking the most populated direction.
///
/// The sign is fixed with per-frame camera up vectors when given,
/// otherwise by putting the larger point mass (the floor) at the bottom.
pub fn estimate_gravity(
    cloud: &PointCloud,
    camera_ups: Option<&[Vector3<f64>]>,
) -> Result<GravityEstimate> {
    let normals: Vec<Vector3<f64>> = cloud.valid_normals().map(|(_, n)| *n).collect();
    if normals.len() < 100 {
        return Err(Error::Gravity(format!(
            "need at least 100 valid normals, got {}",
            normals.len()
        )));
    }

    let bins = icosphere_directions(4);
    let bin_tree = KdTree::build(&bins);
    let mut counts = vec![0usize; bins.len()];
    for n in &normals {
        let (idx, _) = bin_tree.nearest(n).expect("bins non-empty");
        counts[idx] += 1;
    }
    // With camera up vectors available the vertical direction is known
    // to within the capture tilt; only consider bins near it. Otherwise
    // the most common direction is taken outright, which assumes the
    // floor is the dominant surface (as it is in scans captured by a
    // roughly upright camera).
    let mean_up = camera_ups.and_then(|ups| {
        let sum: Vector3<f64> = ups.iter().sum();
        (sum.norm() > 1e-9).then(|| sum.normalize())
    });
    let allowed: Vec<usize> = match mean_up {
        Some(up) => {
            let cos45 = 45f64.to_radians().cos();
            (0..bins.len())
                .filter(|&i| bins[i].dot(&up).abs() >= cos45)
                .collect()
        }
        None => (0..bins.len()).collect(),
    };

    let top = *allowed
        .iter()
        .max_by_key(|&&i| counts[i])
        .expect("bins non-empty");
    // The runner-up must be outside the mode's angular neighborhood,
    // otherwise a cluster straddling two bins reads as ambiguous.
    let min_sep = 15f64.to_radians().cos();
    let second = (0..bins.len())
        .filter(|&i| bins[i].dot(&bins[top]).abs() < min_sep)
        .map(|i| counts[i])
        .max()
        .unwrap_or(0);
    let low_confidence = counts[top] < 2 * second || counts[top] == 0;

    // Refine: average the normals within 5 degrees of the mode axis,
    // folding opposite normals onto the mode's side.
    let cos5 = 5f64.to_radians().cos();
    let mut axis = Vector3::zeros();
    for n in &normals {
        let d = n.dot(&bins[top]);
        if d.abs() >= cos5 {
            axis += d.signum() * n;
        }
    }
    if axis.norm() < 1e-12 {
        axis = bins[top];
    }
    let axis = axis.normalize();

    let direction = match camera_ups {
        Some(ups) if !ups.is_empty() => {
            let mean_up: Vector3<f64> = ups.iter().sum();
            if axis.dot(&mean_up) < 0.0 {
                axis
            } else {
                -axis
            }
        }
        _ => {
            // Heights along the axis: the floor mass sits at the bottom,
            // i.e. at low h if the axis points up.
            let hs: Vec<f64> = cloud.points.iter().map(|p| p.dot(&axis)).collect();
            let (h_min, h_max) = min_max(&hs);
            let band = 0.3 * (h_max - h_min).max(1e-9);
            let bottom = hs.iter().filter(|&&h| h <= h_min + band).count();
            let top_mass = hs.iter().filter(|&&h| h >= h_max - band).count();
            if bottom >= top_mass {
                -axis
            } else {
                axis
            }
        }
    };

    Ok(GravityEstimate {
        direction,
        low_confidence,
    })
}

/// Rotation taking the estimated gravity to (0, -1, 0), i.e. making y
/// point up.
pub fn gravity_correction(gravity: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::rotation_between(gravity, &Vector3::new(0.0, -1.0, 0.0))
        .unwrap_or_else(UnitQuaternion::identity)
}

/// Remove the floor (y-histogram peak) and furniture (sparse occupancy
/// columns) from a gravity-aligned cloud, leaving wall-like structure.
///
/// A cloud with no dominant floor peak (e.g. walls only) passes through
/// the floor stage unchanged.
pub fn build_boundary_scan(cloud: &PointCloud) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::Boundary("input cloud is empty".into()));
    }

    let ys: Vec<f64> = cloud.points.iter().map(|p| p.y).collect();
    let (y_min, y_max) = min_max(&ys);
    let range = y_max - y_min;

    let mut keep: Vec<bool> = vec![true; cloud.len()];
    if range > Y_HIST_BIN {
        let nbins = (range / Y_HIST_BIN).ceil() as usize;
        let mut hist = vec![0usize; nbins];
        for &y in &ys {
            let b = (((y - y_min) / Y_HIST_BIN) as usize).min(nbins - 1);
            hist[b] += 1;
        }
        // The floor peak is searched in the lower half so a heavily
        // scanned ceiling cannot masquerade as the floor.
        let lower = nbins.div_ceil(2);
        let peak = (0..lower).max_by_key(|&b| hist[b]).unwrap();
        let mut nonzero: Vec<usize> = hist.iter().copied().filter(|&c| c > 0).collect();
        nonzero.sort_unstable();
        let median = nonzero[nonzero.len() / 2];
        if hist[peak] >= 2 * median {
            let floor_y = y_min + (peak as f64 + 0.5) * Y_HIST_BIN;
            for (i, &y) in ys.iter().enumerate() {
                if y < floor_y + FLOOR_MARGIN {
                    keep[i] = false;
                }
            }
        }
    }

    // Furniture filter on the survivors: columns that do not span wall
    // height and hold fewer points than the sparsest quartile of wall
    // columns are outliers.
    let survivors: Vec<usize> = (0..cloud.len()).filter(|&i| keep[i]).collect();
    if survivors.is_empty() {
        return Err(Error::Boundary(
            "no points remain after floor removal".into(),
        ));
    }

    use std::collections::HashMap;
    #[derive(Clone, Copy)]
    struct Cell {
        count: usize,
        y_lo: f64,
        y_hi: f64,
    }
    let mut cells: HashMap<(i64, i64), Cell> = HashMap::new();
    let key = |p: &Vector3<f64>| {
        (
            (p.x / OCCUPANCY_CELL).floor() as i64,
            (p.z / OCCUPANCY_CELL).floor() as i64,
        )
    };
    let mut rem_lo = f64::INFINITY;
    let mut rem_hi = f64::NEG_INFINITY;
    for &i in &survivors {
        let p = &cloud.points[i];
        rem_lo = rem_lo.min(p.y);
        rem_hi = rem_hi.max(p.y);
        let e = cells.entry(key(p)).or_insert(Cell {
            count: 0,
            y_lo: f64::INFINITY,
            y_hi: f64::NEG_INFINITY,
        });
        e.count += 1;
        e.y_lo = e.y_lo.min(p.y);
        e.y_hi = e.y_hi.max(p.y);
    }
    let span_needed = 0.5 * (rem_hi - rem_lo);
    let wall_like = |c: &Cell| c.y_hi - c.y_lo >= span_needed;
    let mut wall_counts: Vec<usize> = cells.values().filter(|c| wall_like(c)).map(|c| c.count).collect();
    wall_counts.sort_unstable();
    let q25 = if wall_counts.is_empty() {
        0
    } else {
        wall_counts[wall_counts.len() / 4]
    };

    let selected: Vec<usize> = survivors
        .into_iter()
        .filter(|&i| {
            let c = &cells[&key(&cloud.points[i])];
            wall_like(c) || c.count >= q25
        })
        .collect();
    if selected.is_empty() {
        return Err(Error::Boundary(
            "no points remain after furniture removal".into(),
        ));
    }

    Ok(subset(cloud, &selected))
}

fn subset(cloud: &PointCloud, indices: &[usize]) -> PointCloud {
    PointCloud {
        points: indices.iter().map(|&i| cloud.points[i]).collect(),
        normals: cloud
            .normals
            .as_ref()
            .map(|ns| indices.iter().map(|&i| ns[i]).collect()),
        provenance: cloud
            .provenance
            .as_ref()
            .map(|ps| indices.iter().map(|&i| ps[i]).collect()),
    }
}

/// One of the four yaw hypotheses with its fitted scale/shift and cost.
#[derive(Debug, Clone, Copy)]
pub struct YawCandidate {
    pub transform: SimilarityTransform,
    /// Mean nearest-neighbor distance, boundary scan to transformed plan.
    pub cost: f64,
}

/// Diagnostics of a full alignment run.
#[derive(Debug, Clone)]
pub struct AlignDiagnostics {
    pub gravity: GravityEstimate,
    /// Angle (radians) by which the scan deviated from gravity-aligned.
    pub gravity_correction_angle: f64,
    pub candidates: Vec<YawCandidate>,
    pub boundary_points: usize,
    /// Cost of the selected candidate.
    pub residual: f64,
}

/// Estimate the yaw aligning the floorplan with the boundary scan.
///
/// The dominant horizontal normal of the floorplan is matched against the
/// two dominant (orthogonal) horizontal normals of the boundary scan and
/// their opposites, giving four candidates; each is completed with a
/// scale/shift fit and the candidate with the smallest mean
/// nearest-neighbor distance wins.
pub fn estimate_yaw(boundary: &PointCloud, fp3d: &Floorplan3D) -> Result<(f64, Vec<YawCandidate>)> {
    let candidates = yaw_candidates(boundary, fp3d)?;
    let best = candidates
        .iter()
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("4 candidates");
    Ok((best.transform.yaw, candidates))
}

fn yaw_candidates(boundary: &PointCloud, fp3d: &Floorplan3D) -> Result<Vec<YawCandidate>> {
    if boundary.is_empty() || fp3d.is_empty() {
        return Err(Error::Yaw("boundary scan or floorplan is empty".into()));
    }

    // Dominant horizontal normal directions of the boundary scan.
    let horiz: Vec<(f64, f64)> = boundary
        .valid_normals()
        .filter(|(_, n)| n.y.abs() <= 0.3)
        .map(|(_, n)| {
            let len = (n.x * n.x + n.z * n.z).sqrt();
            (n.x / len, n.z / len)
        })
        .collect();
    if horiz.len() < 40 {
        return Err(Error::Yaw(format!(
            "too few horizontal normals ({})",
            horiz.len()
        )));
    }
    let scan_dir1 = dominant_direction(&horiz, None)?;
    let scan_dir2 = dominant_direction(&horiz, Some(scan_dir1))?;

    // Dominant horizontal normal of the floorplan, weighted by sampling.
    let plan_normals: Vec<(f64, f64)> = fp3d
        .point_wall
        .iter()
        .map(|&w| {
            let n = fp3d.walls[w as usize].plane.normal();
            (n.x, n.z)
        })
        .collect();
    let plan_dir = dominant_direction(&plan_normals, None)?;

    let angle = |(x, z): (f64, f64)| z.atan2(x);
    let phi_plan = angle(plan_dir);
    let targets = [
        angle(scan_dir1),
        angle(scan_dir1) + std::f64::consts::PI,
        angle(scan_dir2),
        angle(scan_dir2) + std::f64::consts::PI,
    ];

    // Boundary statistics used by the per-candidate scale/shift fit and
    // subsampled query points for scoring; only wall-like points so
    // ceiling or floor remnants cannot bias the fit.
    let wall_pts = wall_like_points(boundary);
    let scan_stats = cloud_xz_stats(&wall_pts)
        .ok_or_else(|| Error::Yaw("degenerate boundary scan".into()))?;
    let queries: Vec<Vector3<f64>> = subsample(&wall_pts, 4000);

    let mut candidates = Vec::with_capacity(4);
    for tau in targets {
        // rotate_xz moves angle theta to theta - yaw.
        let yaw = normalize_angle(phi_plan - tau);
        let rotated: Vec<Vector3<f64>> = fp3d
            .points
            .iter()
            .map(|p| {
                let (x, z) = rotate_xz(p.x, p.z, yaw);
                Vector3::new(x, p.y, z)
            })
            .collect();
        let transform = match fit_scale_shift(&scan_stats, &rotated, yaw) {
            Ok(t) => t,
            Err(_) => continue,
        };
        let placed: Vec<Vector3<f64>> = rotated
            .iter()
            .map(|p| {
                Vector3::new(
                    transform.scale * p.x + transform.shift.x,
                    p.y,
                    transform.scale * p.z + transform.shift.z,
                )
            })
            .collect();
        let tree = KdTree::build(&placed);
        let cost = queries
            .iter()
            .map(|q| tree.nearest(q).map(|(_, d2)| d2.sqrt()).unwrap_or(0.0))
            .sum::<f64>()
            / queries.len() as f64;
        candidates.push(YawCandidate { transform, cost });
    }
    if candidates.is_empty() {
        return Err(Error::Yaw("all yaw candidates were degenerate".into()));
    }
    Ok(candidates)
}

/// Estimate the scale and shift for a given yaw: scale is the mean of the
/// x- and z-range ratios, the shift makes the horizontal bounding-box
/// centers coincide. y is untouched.
pub fn estimate_scale_shift(
    boundary: &PointCloud,
    fp3d: &Floorplan3D,
    yaw: f64,
) -> Result<SimilarityTransform> {
    let stats = cloud_xz_stats(&boundary.points)
        .ok_or_else(|| Error::ScaleShift("boundary scan is empty".into()))?;
    let rotated: Vec<Vector3<f64>> = fp3d
        .points
        .iter()
        .map(|p| {
            let (x, z) = rotate_xz(p.x, p.z, yaw);
            Vector3::new(x, p.y, z)
        })
        .collect();
    fit_scale_shift(&stats, &rotated, yaw)
}

struct XzStats {
    x_range: f64,
    z_range: f64,
    x_center: f64,
    z_center: f64,
}

fn cloud_xz_stats(points: &[Vector3<f64>]) -> Option<XzStats> {
    if points.is_empty() {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let zs: Vec<f64> = points.iter().map(|p| p.z).collect();
    let (x_lo, x_hi) = min_max(&xs);
    let (z_lo, z_hi) = min_max(&zs);
    Some(XzStats {
        x_range: x_hi - x_lo,
        z_range: z_hi - z_lo,
        x_center: 0.5 * (x_lo + x_hi),
        z_center: 0.5 * (z_lo + z_hi),
    })
}

fn fit_scale_shift(
    scan: &XzStats,
    plan_points: &[Vector3<f64>],
    yaw: f64,
) -> Result<SimilarityTransform> {
    let plan = cloud_xz_stats(plan_points)
        .ok_or_else(|| Error::ScaleShift("floorplan is empty".into()))?;
    if plan.x_range < 1e-9 || plan.z_range < 1e-9 || scan.x_range < 1e-9 || scan.z_range < 1e-9 {
        return Err(Error::ScaleShift(
            "degenerate horizontal extent (zero range)".into(),
        ));
    }
    let scale = 0.5 * (scan.x_range / plan.x_range + scan.z_range / plan.z_range);
    let shift = Vector3::new(
        scan.x_center - scale * plan.x_center,
        0.0,
        scan.z_center - scale * plan.z_center,
    );
    Ok(SimilarityTransform { yaw, scale, shift })
}

/// Full alignment: gravity, boundary scan, yaw candidates, scale/shift,
/// and an ICP polish of the winning candidate.
///
/// The scan must carry normals. The result maps the floorplan into the
/// gravity-aligned scan frame; `diagnostics.gravity_correction_angle`
/// reports how far the input was from gravity-aligned.
pub fn align(
    scan: &PointCloud,
    fp3d: &Floorplan3D,
    camera_ups: Option<&[Vector3<f64>]>,
) -> Result<(SimilarityTransform, AlignDiagnostics)> {
    if scan.normals.is_none() {
        return Err(Error::InvalidParameter(
            "alignment needs a scan with normals".into(),
        ));
    }
    let gravity = estimate_gravity(scan, camera_ups)?;
    let correction = gravity_correction(&gravity.direction);
    let angle = correction.angle();

    let aligned = if angle > 1e-12 {
        PointCloud {
            points: scan.points.iter().map(|p| correction * p).collect(),
            normals: scan
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| correction * n).collect()),
            provenance: scan.provenance.clone(),
        }
    } else {
        scan.clone()
    };

    let boundary = build_boundary_scan(&aligned)?;
    let (_, candidates) = estimate_yaw(&boundary, fp3d)?;
    let best = *candidates
        .iter()
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("non-empty candidates");

    // Range-ratio scale and bounding-box shift leave a few centimeters
    // of error that the pulling terms would inherit; a short similarity
    // ICP takes it out.
    let (transform, residual) = refine_similarity_icp(&boundary, fp3d, best.transform);

    Ok((
        transform,
        AlignDiagnostics {
            gravity,
            gravity_correction_angle: angle,
            candidates,
            boundary_points: boundary.len(),
            residual,
        },
    ))
}

/// Iterative refinement of yaw, horizontal scale and shift: exact
/// nearest-segment correspondences in the horizontal plane, then the
/// closed-form 2D similarity that best maps the floorplan onto the
/// boundary scan. Matching against the segments rather than the sampled
/// points keeps the result free of the sampling gap. Returns the refined
/// transform and the final trimmed mean correspondence distance.
fn refine_similarity_icp(
    boundary: &PointCloud,
    fp3d: &Floorplan3D,
    initial: SimilarityTransform,
) -> (SimilarityTransform, f64) {
    const ITERATIONS: usize = 12;
    let queries = subsample(&wall_like_points(boundary), 6000);
    let mut transform = initial;
    let mut residual = f64::INFINITY;

    for _ in 0..ITERATIONS {
        // Plan segments under the current transform.
        let segs: Vec<(f64, f64, f64, f64)> = fp3d
            .walls
            .iter()
            .map(|w| {
                let a = transform.apply(&Vector3::new(w.segment.u1, 0.0, w.segment.v1));
                let b = transform.apply(&Vector3::new(w.segment.u2, 0.0, w.segment.v2));
                (a.x, a.z, b.x, b.z)
            })
            .collect();
        let nearest_on_segments = |x: f64, z: f64| -> (f64, (f64, f64)) {
            let mut best = (f64::INFINITY, (0.0, 0.0));
            for &(x1, z1, x2, z2) in &segs {
                let (dx, dz) = (x2 - x1, z2 - z1);
                let t = (((x - x1) * dx + (z - z1) * dz) / (dx * dx + dz * dz)).clamp(0.0, 1.0);
                let (px, pz) = (x1 + t * dx, z1 + t * dz);
                let d = ((x - px).powi(2) + (z - pz).powi(2)).sqrt();
                if d < best.0 {
                    best = (d, (px, pz));
                }
            }
            best
        };

        let mut all: Vec<(f64, (f64, f64), (f64, f64))> = Vec::with_capacity(queries.len());
        for q in &queries {
            let (d, p) = nearest_on_segments(q.x, q.z);
            all.push((d, p, (q.x, q.z)));
        }
        if all.is_empty() {
            break;
        }

        // Trim: scan points with no true counterpart (doorways, coverage
        // gaps, leftover clutter) otherwise bias the least squares.
        let mut dists: Vec<f64> = all.iter().map(|(d, _, _)| *d).collect();
        dists.sort_by(f64::total_cmp);
        let median = dists[dists.len() / 2];
        let cutoff = (2.5 * median).max(0.05);
        let pairs: Vec<((f64, f64), (f64, f64))> = all
            .iter()
            .filter(|(d, _, _)| *d <= cutoff)
            .map(|(_, p, b)| (*p, *b))
            .collect();
        if pairs.len() < 10 {
            break;
        }
        residual = all
            .iter()
            .filter(|(d, _, _)| *d <= cutoff)
            .map(|(d, _, _)| d)
            .sum::<f64>()
            / pairs.len() as f64;

        let Some(delta) = fit_similarity_2d(&pairs) else {
            break;
        };
        // Compose the increment onto the running transform:
        // new(p) = delta(old(p)).
        let (sx, sz) = rotate_xz(transform.shift.x, transform.shift.z, delta.yaw);
        transform = SimilarityTransform {
            yaw: normalize_angle(transform.yaw + delta.yaw),
            scale: transform.scale * delta.scale,
            shift: Vector3::new(
                delta.scale * sx + delta.shift.x,
                0.0,
                delta.scale * sz + delta.shift.z,
            ),
        };
        if delta.scale.ln().abs() < 1e-9
            && delta.yaw.abs() < 1e-9
            && delta.shift.norm() < 1e-9
        {
            break;
        }
    }
    (transform, residual)
}

/// Closed-form least-squares 2D similarity mapping sources onto targets
/// (Procrustes with uniform scale).
fn fit_similarity_2d(pairs: &[((f64, f64), (f64, f64))]) -> Option<SimilarityTransform> {
    let n = pairs.len() as f64;
    let (mut mpx, mut mpz, mut mbx, mut mbz) = (0.0, 0.0, 0.0, 0.0);
    for ((px, pz), (bx, bz)) in pairs {
        mpx += px;
        mpz += pz;
        mbx += bx;
        mbz += bz;
    }
    mpx /= n;
    mpz /= n;
    mbx /= n;
    mbz /= n;

    let (mut dot, mut cross, mut norm_p) = (0.0, 0.0, 0.0);
    for ((px, pz), (bx, bz)) in pairs {
        let (qx, qz) = (px - mpx, pz - mpz);
        let (rx, rz) = (bx - mbx, bz - mbz);
        dot += qx * rx + qz * rz;
        cross += qx * rz - qz * rx;
        norm_p += qx * qx + qz * qz;
    }
    if norm_p < 1e-12 {
        return None;
    }
    // Standard rotation angle alpha maps sources toward targets;
    // rotate_xz(yaw) equals a standard rotation by -yaw.
    let alpha = cross.atan2(dot);
    let scale = (dot * dot + cross * cross).sqrt() / norm_p;
    if !(scale.is_finite() && scale > 0.0) {
        return None;
    }
    let yaw = -alpha;
    let (rx, rz) = rotate_xz(mpx, mpz, yaw);
    Some(SimilarityTransform {
        yaw,
        scale,
        shift: Vector3::new(mbx - scale * rx, 0.0, mbz - scale * rz),
    })
}

/// Mode of a set of 2D unit directions using 5-degree angular bins,
/// refined by averaging the members of the winning bin.
///
/// With `orthogonal_to` set, the search is restricted to directions
/// within 15 degrees of perpendicular to it, and it is an error when no
/// sufficiently populated bin exists there.
fn dominant_direction(
    dirs: &[(f64, f64)],
    orthogonal_to: Option<(f64, f64)>,
) -> Result<(f64, f64)> {
    const NBINS: usize = 72;
    let mut counts = [0usize; NBINS];
    let bin_of = |x: f64, z: f64| {
        let mut a = z.atan2(x);
        if a < 0.0 {
            a += 2.0 * std::f64::consts::PI;
        }
        ((a / (2.0 * std::f64::consts::PI) * NBINS as f64) as usize).min(NBINS - 1)
    };
    for &(x, z) in dirs {
        counts[bin_of(x, z)] += 1;
    }

    let allowed: Vec<usize> = match orthogonal_to {
        None => (0..NBINS).collect(),
        Some((ox, oz)) => (0..NBINS)
            .filter(|&b| {
                let a = (b as f64 + 0.5) / NBINS as f64 * 2.0 * std::f64::consts::PI;
                let dot = (a.cos() * ox + a.sin() * oz).abs();
                dot <= 15f64.to_radians().sin() + 1e-12
            })
            .collect(),
    };

    let &best = allowed
        .iter()
        .max_by_key(|&&b| counts[b])
        .ok_or_else(|| Error::Yaw("no direction bins available".into()))?;
    let needed = (dirs.len() / 100).max(20);
    if counts[best] < needed {
        return Err(Error::Yaw(
            "fewer than two dominant horizontal directions".into(),
        ));
    }

    // Average members of the winning bin and its neighbors, folding
    // opposite vectors onto the mode's side.
    let center = (best as f64 + 0.5) / NBINS as f64 * 2.0 * std::f64::consts::PI;
    let (cx, cz) = (center.cos(), center.sin());
    let mut sx = 0.0;
    let mut sz = 0.0;
    for &(x, z) in dirs {
        let d = x * cx + z * cz;
        if d.abs() >= 10f64.to_radians().cos() {
            let s = d.signum();
            sx += s * x;
            sz += s * z;
        }
    }
    let len = (sx * sx + sz * sz).sqrt();
    if len < 1e-12 {
        return Ok((cx, cz));
    }
    Ok((sx / len, sz / len))
}

/// Points whose normals are valid and near-horizontal: wall surfaces.
/// Ceiling and floor remnants riding along in wall occupancy columns
/// would otherwise bias the alignment. Falls back to all points when the
/// cloud has no normals.
fn wall_like_points(cloud: &PointCloud) -> Vec<Vector3<f64>> {
    match cloud.normals.as_ref() {
        None => cloud.points.clone(),
        Some(_) => {
            let picked: Vec<Vector3<f64>> = cloud
                .valid_normals()
                .filter(|(_, n)| n.y.abs() <= 0.3)
                .map(|(p, _)| *p)
                .collect();
            if picked.is_empty() {
                cloud.points.clone()
            } else {
                picked
            }
        }
    }
}

fn subsample(points: &[Vector3<f64>], max: usize) -> Vec<Vector3<f64>> {
    if points.len() <= max {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(max);
    points.iter().step_by(stride).copied().collect()
}

fn min_max(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

fn normalize_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * std::f64::consts::PI);
    if a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    }
    if a < -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    }
    a
}

/// Icosphere vertex directions after `level` subdivisions (level 4 gives
/// 2562 directions, about 4 degrees apart).
fn icosphere_directions(level: usize) -> Vec<Vector3<f64>> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    use std::collections::HashMap;
    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut new_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0usize; 3];
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mid[e] = *midpoints.entry(key).or_insert_with(|| {
                    verts.push((verts[a] + verts[b]).normalize());
                    verts.len() - 1
                });
            }
            new_faces.push([f[0], mid[0], mid[2]]);
            new_faces.push([f[1], mid[1], mid[0]]);
            new_faces.push([f[2], mid[2], mid[1]]);
            new_faces.push([mid[0], mid[1], mid[2]]);
        }
        faces = new_faces;
    }
    verts
}
