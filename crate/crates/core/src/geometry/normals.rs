//! k-NN normal estimation.

use super::{KdTree, PointCloud};
use crate::error::{Error, Result};
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

/// Estimate a unit normal per point from the covariance of its k nearest
/// neighbors (smallest-eigenvalue eigenvector).
///
/// Sign disambiguation: when the cloud has provenance and `viewpoints`
/// supplies the camera center per frame, each normal is flipped toward the
/// viewpoint it was observed from; otherwise it is flipped away from the
/// cloud centroid. Degenerate neighborhoods (covariance rank < 2) produce
/// a zero normal, which downstream consumers skip.
pub fn estimate_normals(
    cloud: &PointCloud,
    k: usize,
    viewpoints: Option<&[Vector3<f64>]>,
) -> Result<PointCloud> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "normal estimation needs k >= 2, got {k}"
        )));
    }
    if cloud.len() < k + 1 {
        return Err(Error::InvalidParameter(format!(
            "normal estimation needs at least k+1 = {} points, got {}",
            k + 1,
            cloud.len()
        )));
    }
    if let (Some(vps), Some(prov)) = (viewpoints, cloud.provenance.as_ref()) {
        if let Some(bad) = prov.iter().find(|pr| pr.frame >= vps.len()) {
            return Err(Error::InvalidParameter(format!(
                "provenance frame {} has no viewpoint (got {})",
                bad.frame,
                vps.len()
            )));
        }
    }

    let tree = KdTree::build(&cloud.points);
    let centroid = cloud.centroid().expect("non-empty cloud");

    let normals: Vec<Vector3<f64>> = cloud
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let neigh = tree.k_nearest(p, k + 1);
            let mut mean = Vector3::zeros();
            for &(j, _) in &neigh {
                mean += cloud.points[j];
            }
            mean /= neigh.len() as f64;
            let mut cov = Matrix3::zeros();
            for &(j, _) in &neigh {
                let d = cloud.points[j] - mean;
                cov += d * d.transpose();
            }
            cov /= neigh.len() as f64;

            let eig = nalgebra::SymmetricEigen::new(cov);
            let mut order = [0usize, 1, 2];
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let lam_mid = eig.eigenvalues[order[1]].max(0.0);
            let lam_max = eig.eigenvalues[order[2]].max(0.0);
            if lam_max <= 0.0 || lam_mid <= 1e-9 * lam_max {
                return Vector3::zeros();
            }
            let mut n = eig.eigenvectors.column(order[0]).normalize();

            let toward = match (viewpoints, cloud.provenance.as_ref()) {
                (Some(vps), Some(prov)) => vps[prov[i].frame] - p,
                _ => p - centroid,
            };
            if n.dot(&toward) < 0.0 {
                n = -n;
            }
            n
        })
        .collect();

    Ok(PointCloud {
        points: cloud.points.clone(),
        normals: Some(normals),
        provenance: cloud.provenance.clone(),
    })
}
