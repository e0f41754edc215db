//! Semantic point clouds: the full scan plus floor and walls subsets,
//! built by backprojecting labeled pixels with the current camera poses.
//!
//! Every point carries provenance (frame, pixel) and a cached camera-frame
//! position, so moving a camera re-poses its points exactly without
//! touching the depth images again.

use crate::error::{Error, Result};
use crate::geometry::{backproject_pixel, PointCloud, Pose, Provenance};
use crate::io::{Frame, LabelMap};
use nalgebra::Vector3;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct SemanticClouds {
    /// The scan P: every valid-depth pixel at the stride grid.
    pub full: PointCloud,
    /// Floor-labeled subset P_F.
    pub floor: PointCloud,
    /// Wall-labeled subset P_W.
    pub walls: PointCloud,
    /// Pixel stride used for subsampling.
    pub stride: usize,
    /// Camera-frame position per full-cloud point.
    pub full_cam: Vec<Vector3<f64>>,
    /// Index into `full` per floor point.
    pub floor_in_full: Vec<u32>,
    /// Index into `full` per walls point.
    pub walls_in_full: Vec<u32>,
}

impl SemanticClouds {
    pub fn floor_cam(&self, i: usize) -> &Vector3<f64> {
        &self.full_cam[self.floor_in_full[i] as usize]
    }

    pub fn walls_cam(&self, i: usize) -> &Vector3<f64> {
        &self.full_cam[self.walls_in_full[i] as usize]
    }

    pub fn floor_frame(&self, i: usize) -> usize {
        self.full.provenance.as_ref().expect("provenance")[self.floor_in_full[i] as usize].frame
    }

    pub fn walls_frame(&self, i: usize) -> usize {
        self.full.provenance.as_ref().expect("provenance")[self.walls_in_full[i] as usize].frame
    }

    pub fn full_frame(&self, i: usize) -> usize {
        self.full.provenance.as_ref().expect("provenance")[i].frame
    }
}

/// Backproject every valid-depth pixel on the stride grid of every frame,
/// transform by the frame pose, and split by semantic label.
pub fn build_semantic_clouds(
    frames: &[Frame],
    poses: &[Pose],
    stride: usize,
    labels: LabelMap,
) -> Result<SemanticClouds> {
    if frames.len() != poses.len() {
        return Err(Error::CountMismatch {
            what: "poses vs frames".into(),
            expected: frames.len(),
            got: poses.len(),
        });
    }
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be >= 1".into()));
    }

    struct FramePoints {
        world: Vec<Vector3<f64>>,
        cam: Vec<Vector3<f64>>,
        prov: Vec<Provenance>,
        class: Vec<u8>,
    }

    let per_frame: Vec<FramePoints> = frames
        .par_iter()
        .zip(poses.par_iter())
        .map(|(frame, pose)| {
            let mut fp = FramePoints {
                world: Vec::new(),
                cam: Vec::new(),
                prov: Vec::new(),
                class: Vec::new(),
            };
            let (w, h) = (frame.depth.width, frame.depth.height);
            for row in (0..h).step_by(stride) {
                for col in (0..w).step_by(stride) {
                    let raw = frame.depth.at(row, col);
                    if raw == 0 {
                        continue;
                    }
                    let cam =
                        backproject_pixel(col as f64, row as f64, raw, &frame.intrinsics)
                            .expect("raw > 0");
                    fp.world.push(pose.transform_point(&cam));
                    fp.cam.push(cam);
                    fp.prov.push(Provenance {
                        frame: frame.index,
                        row: row as u32,
                        col: col as u32,
                    });
                    fp.class.push(frame.labels.at(row, col));
                }
            }
            fp
        })
        .collect();

    let total: usize = per_frame.iter().map(|fp| fp.world.len()).sum();
    let mut full = PointCloud {
        points: Vec::with_capacity(total),
        normals: None,
        provenance: Some(Vec::with_capacity(total)),
    };
    let mut full_cam = Vec::with_capacity(total);
    let mut floor = PointCloud {
        points: Vec::new(),
        normals: None,
        provenance: Some(Vec::new()),
    };
    let mut walls = PointCloud {
        points: Vec::new(),
        normals: None,
        provenance: Some(Vec::new()),
    };
    let mut floor_in_full = Vec::new();
    let mut walls_in_full = Vec::new();

    for fp in per_frame {
        for i in 0..fp.world.len() {
            let full_idx = full.points.len() as u32;
            full.points.push(fp.world[i]);
            full.provenance.as_mut().unwrap().push(fp.prov[i]);
            full_cam.push(fp.cam[i]);
            if fp.class[i] == labels.floor {
                floor.points.push(fp.world[i]);
                floor.provenance.as_mut().unwrap().push(fp.prov[i]);
                floor_in_full.push(full_idx);
            } else if fp.class[i] == labels.wall {
                walls.points.push(fp.world[i]);
                walls.provenance.as_mut().unwrap().push(fp.prov[i]);
                walls_in_full.push(full_idx);
            }
        }
    }

    Ok(SemanticClouds {
        full,
        floor,
        walls,
        stride,
        full_cam,
        floor_in_full,
        walls_in_full,
    })
}

/// Recompute world coordinates under new poses. Identical to rebuilding
/// from the frames with `new_poses`.
pub fn repose_clouds(clouds: &SemanticClouds, new_poses: &[Pose]) -> Result<SemanticClouds> {
    let prov = clouds
        .full
        .provenance
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("clouds lack provenance".into()))?;
    if let Some(bad) = prov.iter().find(|p| p.frame >= new_poses.len()) {
        return Err(Error::CountMismatch {
            what: format!("pose for frame {}", bad.frame),
            expected: bad.frame + 1,
            got: new_poses.len(),
        });
    }

    let mut out = clouds.clone();
    out.full.points = clouds
        .full_cam
        .par_iter()
        .zip(prov.par_iter())
        .map(|(cam, pr)| new_poses[pr.frame].transform_point(cam))
        .collect();
    for (i, &fi) in clouds.floor_in_full.iter().enumerate() {
        out.floor.points[i] = out.full.points[fi as usize];
    }
    for (i, &wi) in clouds.walls_in_full.iter().enumerate() {
        out.walls.points[i] = out.full.points[wi as usize];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraIntrinsics;
    use crate::io::Grid;
    use nalgebra::UnitQuaternion;

    /// A frame looking straight down the z axis at a synthetic "floor"
    /// encoded directly in the depth/label grids.
    fn flat_frame(index: usize, label: u8) -> Frame {
        let w = 8;
        let h = 6;
        let depth = Grid::from_data(w, h, vec![1000u16; w * h]).unwrap();
        let labels = Grid::from_data(w, h, vec![label; w * h]).unwrap();
        Frame {
            index,
            depth,
            labels,
            intrinsics: CameraIntrinsics::new(4.0, 4.0, 4.0, 3.0, 0.001).unwrap(),
            initial_pose: Pose::identity(),
        }
    }

    /// Frame whose camera looks straight down at the floor plane y = 0
    /// from 1 m above: camera z (forward) maps to world -y, so a constant
    /// 1 m depth image lands exactly on the plane.
    fn downward_pose() -> Pose {
        let rot = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::FRAC_PI_2);
        Pose::new(rot, Vector3::new(0.0, 1.0, 0.0))
    }

    #[test]
    fn floor_points_land_on_floor_plane() {
        let frame = flat_frame(0, 1);
        let poses = [downward_pose()];
        let clouds = build_semantic_clouds(&[frame], &poses, 1, LabelMap::default()).unwrap();
        assert!(!clouds.floor.is_empty());
        for p in &clouds.floor.points {
            assert!(p.y.abs() < 1e-6, "floor point {p:?} off the plane");
        }
        assert!(clouds.walls.is_empty());
    }

    #[test]
    fn unlabeled_masks_populate_only_full() {
        let frame = flat_frame(0, 0);
        let clouds =
            build_semantic_clouds(&[frame], &[Pose::identity()], 2, LabelMap::default()).unwrap();
        assert!(clouds.floor.is_empty());
        assert!(clouds.walls.is_empty());
        assert!(!clouds.full.is_empty());
    }

    #[test]
    fn pose_translation_shifts_outputs_exactly() {
        let frame = flat_frame(0, 2);
        let base =
            build_semantic_clouds(&[frame.clone()], &[Pose::identity()], 1, LabelMap::default())
                .unwrap();
        let shifted_pose = Pose::new(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 1.0));
        let shifted =
            build_semantic_clouds(&[frame], &[shifted_pose], 1, LabelMap::default()).unwrap();
        for (a, b) in base.full.points.iter().zip(&shifted.full.points) {
            assert_eq!(b - a, Vector3::new(0.0, 0.0, 1.0));
        }
    }

    #[test]
    fn repose_equals_rebuild() {
        let frames = vec![flat_frame(0, 1), flat_frame(1, 2)];
        let init = [Pose::identity(), downward_pose()];
        let clouds = build_semantic_clouds(&frames, &init, 2, LabelMap::default()).unwrap();

        let new_poses = [
            Pose::new(
                UnitQuaternion::from_euler_angles(0.1, 0.2, -0.3),
                Vector3::new(1.0, -2.0, 0.5),
            ),
            Pose::identity(),
        ];
        let reposed = repose_clouds(&clouds, &new_poses).unwrap();
        let rebuilt = build_semantic_clouds(&frames, &new_poses, 2, LabelMap::default()).unwrap();
        for (a, b) in reposed.full.points.iter().zip(&rebuilt.full.points) {
            assert!((a - b).norm() < 1e-12);
        }
        for (a, b) in reposed.walls.points.iter().zip(&rebuilt.walls.points) {
            assert!((a - b).norm() < 1e-12);
        }

        // Identity case: same poses give identical clouds.
        let same = repose_clouds(&clouds, &init).unwrap();
        assert_eq!(same.full.points, clouds.full.points);
    }

    #[test]
    fn repose_without_provenance_is_error() {
        let frames = vec![flat_frame(0, 1)];
        let mut clouds =
            build_semantic_clouds(&frames, &[Pose::identity()], 2, LabelMap::default()).unwrap();
        clouds.full.provenance = None;
        assert!(repose_clouds(&clouds, &[Pose::identity()]).is_err());
    }

    #[test]
    fn counts_and_containment() {
        let frames = vec![flat_frame(0, 1), flat_frame(1, 2), flat_frame(2, 0)];
        let poses = [Pose::identity(), Pose::identity(), Pose::identity()];
        let clouds = build_semantic_clouds(&frames, &poses, 2, LabelMap::default()).unwrap();
        assert!(clouds.floor.len() + clouds.walls.len() <= clouds.full.len());
        // Label of every provenance pixel matches its cloud's class.
        for (i, pr) in clouds
            .floor
            .provenance
            .as_ref()
            .unwrap()
            .iter()
            .enumerate()
        {
            assert_eq!(
                frames[pr.frame].labels.at(pr.row as usize, pr.col as usize),
                LabelMap::default().floor,
                "floor point {i} has wrong label"
            );
        }
    }
}
