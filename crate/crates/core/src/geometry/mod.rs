//! Core geometric types and operations.
//!
//! Coordinate conventions used throughout the crate:
//!
//! - Camera frame: z forward, x right, y down.
//! - World frame: y up once the scan is gravity-aligned.
//! - [`Pose`] maps camera coordinates to world coordinates.

mod kdtree;
mod normals;

pub use kdtree::KdTree;
pub use normals::estimate_normals;

use crate::error::{Error, Result};
use nalgebra::{Matrix3, UnitQuaternion, Vector3};

/// Pinhole camera intrinsics plus the scale converting stored integer
/// depth values to meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Meters per raw depth unit (e.g. 0.001 for millimeter depth).
    pub depth_scale: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, depth_scale: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if !(depth_scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "depth_scale must be positive, got {depth_scale}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            depth_scale,
        })
    }
}

/// Backproject pixel `(u, v)` (column, row) with raw depth `depth_raw`
/// into the camera frame.
///
/// Returns `((u-cx)·z/fx, (v-cy)·z/fy, z)` with `z = depth_raw·depth_scale`.
/// A zero raw depth is a missing measurement and yields [`Error::NoDepth`].
pub fn backproject_pixel(
    u: f64,
    v: f64,
    depth_raw: u16,
    intr: &CameraIntrinsics,
) -> Result<Vector3<f64>> {
    if depth_raw == 0 {
        return Err(Error::NoDepth {
            row: v.round() as usize,
            col: u.round() as usize,
        });
    }
    let z = depth_raw as f64 * intr.depth_scale;
    Ok(Vector3::new(
        (u - intr.cx) * z / intr.fx,
        (v - intr.cy) * z / intr.fy,
        z,
    ))
}

/// Project a camera-frame point back to pixel coordinates `(u, v)`.
///
/// Inverse of [`backproject_pixel`] for points with positive z.
pub fn project_point(p: &Vector3<f64>, intr: &CameraIntrinsics) -> Result<(f64, f64)> {
    if p.z <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "cannot project point with non-positive depth z={}",
            p.z
        )));
    }
    Ok((
        p.x / p.z * intr.fx + intr.cx,
        p.y / p.z * intr.fy + intr.cy,
    ))
}

/// Rigid camera-to-world transform, the variable of the optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_parts(
        tx: f64,
        ty: f64,
        tz: f64,
        qx: f64,
        qy: f64,
        qz: f64,
        qw: f64,
    ) -> Result<Self> {
        let q = nalgebra::Quaternion::new(qw, qx, qy, qz);
        let norm = q.norm();
        if (norm - 1.0).abs() > 1e-3 {
            return Err(Error::InvalidParameter(format!(
                "quaternion norm {norm} too far from 1"
            )));
        }
        // Preserve the stored bits when the quaternion is already unit so
        // that write(load(x)) round-trips exactly.
        let unit = if (norm - 1.0).abs() <= 1e-12 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        Ok(Self::new(unit, Vector3::new(tx, ty, tz)))
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `R·p + t`: camera frame to world frame.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotate a direction without translating it.
    pub fn rotate_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn inverse(&self) -> Pose {
        let rot_inv = self.rotation.inverse();
        Pose {
            rotation: rot_inv,
            translation: -(rot_inv * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Apply a local update: translation shifts by `dt`, rotation is
    /// left-composed with the exponential of `dr` (axis-angle) and the
    /// quaternion is renormalized.
    pub fn retract(&self, dt: &Vector3<f64>, dr: &Vector3<f64>) -> Pose {
        let inc = UnitQuaternion::from_scaled_axis(*dr);
        let q = (inc * self.rotation).into_inner().normalize();
        Pose {
            rotation: UnitQuaternion::new_unchecked(q),
            translation: self.translation + dt,
        }
    }

    /// Rotation angle between the two poses, in radians.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }
}

/// A plane `n·x + d = 0` with unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    normal: Vector3<f64>,
    offset: f64,
}

impl Plane {
    /// Construct from a (not necessarily unit) normal and a point on the
    /// plane.
    pub fn from_normal_point(normal: Vector3<f64>, point: &Vector3<f64>) -> Result<Self> {
        let norm = normal.norm();
        if norm < 1e-12 {
            return Err(Error::InvalidParameter("plane normal is zero".into()));
        }
        let n = normal / norm;
        Ok(Plane {
            normal: n,
            offset: -n.dot(point),
        })
    }

    pub fn new(normal: Vector3<f64>, offset: f64) -> Result<Self> {
        let norm = normal.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "plane normal must be unit length, got norm {norm}"
            )));
        }
        Ok(Plane { normal, offset })
    }

    pub fn normal(&self) -> &Vector3<f64> {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// `n·p + d`, positive on the normal side.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.offset
    }

    /// `|n·p + d|`.
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.signed_distance(p).abs()
    }
}

/// Unsigned point-to-plane distance.
pub fn point_plane_distance(p: &Vector3<f64>, plane: &Plane) -> f64 {
    plane.distance(p)
}

/// Origin of a point: which frame and pixel it was backprojected from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub frame: usize,
    pub row: u32,
    pub col: u32,
}

/// A point cloud with optional per-point normals and provenance.
///
/// Normals, when present, are unit length; a zero vector marks a normal
/// that could not be estimated (degenerate neighborhood) and is skipped by
/// all consumers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub normals: Option<Vec<Vector3<f64>>>,
    pub provenance: Option<Vec<Provenance>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self {
            points,
            normals: None,
            provenance: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points paired with their valid (non-zero) normals.
    pub fn valid_normals(&self) -> impl Iterator<Item = (&Vector3<f64>, &Vector3<f64>)> {
        self.normals
            .iter()
            .flat_map(|ns| self.points.iter().zip(ns.iter()))
            .filter(|(_, n)| n.norm_squared() > 0.0)
    }

    pub fn centroid(&self) -> Option<Vector3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        Some(self.points.iter().sum::<Vector3<f64>>() / self.points.len() as f64)
    }
}

/// Total least-squares plane fit: centroid plus the smallest-eigenvalue
/// eigenvector of the point covariance.
///
/// Fails for fewer than 3 points or a collinear configuration.
pub fn fit_plane(points: &[Vector3<f64>]) -> Result<Plane> {
    if points.len() < 3 {
        return Err(Error::PlaneFit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    let centroid: Vector3<f64> = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= points.len() as f64;

    let eig = nalgebra::SymmetricEigen::new(cov);
    // Sort eigenvalues ascending by index.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lam_mid = eig.eigenvalues[order[1]].max(0.0);
    let lam_max = eig.eigenvalues[order[2]].max(0.0);
    // Rank < 2 means the points do not span a plane.
    if lam_max <= 0.0 || lam_mid <= 1e-12 * lam_max {
        return Err(Error::PlaneFit("points are collinear".into()));
    }
    let normal = eig.eigenvectors.column(order[0]).into_owned();
    Plane::from_normal_point(normal, &centroid)
}
