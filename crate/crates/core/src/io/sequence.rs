//! Scene directory loading: manifest + trajectory + per-frame grids.

use super::{read_depth_grid, read_label_grid, read_trajectory, Frame};
use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Parsed `manifest.txt`: shared intrinsics plus per-frame grid paths
/// (relative to the scene directory).
#[derive(Debug, Clone)]
pub struct SceneManifest {
    pub intrinsics: CameraIntrinsics,
    pub frames: Vec<(usize, PathBuf, PathBuf)>,
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<SceneManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut intrinsics = None;
    let mut frames = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "intrinsics" => {
                if fields.len() != 6 {
                    return Err(Error::parse(path, lineno, "intrinsics needs 5 values"));
                }
                let mut v = [0.0f64; 5];
                for (i, f) in fields[1..].iter().enumerate() {
                    v[i] = f
                        .parse()
                        .map_err(|_| Error::parse(path, lineno, "bad intrinsics value"))?;
                }
                intrinsics = Some(
                    CameraIntrinsics::new(v[0], v[1], v[2], v[3], v[4])
                        .map_err(|e| Error::parse(path, lineno, e.to_string()))?,
                );
            }
            "frame" => {
                if fields.len() != 4 {
                    return Err(Error::parse(
                        path,
                        lineno,
                        "frame record needs index and two paths",
                    ));
                }
                let index: usize = fields[1]
                    .parse()
                    .map_err(|_| Error::parse(path, lineno, "bad frame index"))?;
                frames.push((index, PathBuf::from(fields[2]), PathBuf::from(fields[3])));
            }
            other => {
                return Err(Error::parse(path, lineno, format!("unknown record '{other}'")));
            }
        }
    }

    let intrinsics = intrinsics.ok_or_else(|| Error::Format {
        path: path.into(),
        msg: "manifest has no intrinsics record".into(),
    })?;
    if frames.is_empty() {
        return Err(Error::Format {
            path: path.into(),
            msg: "manifest lists no frames".into(),
        });
    }
    Ok(SceneManifest { intrinsics, frames })
}

pub fn write_manifest(manifest: &SceneManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    let i = &manifest.intrinsics;
    writeln!(
        out,
        "intrinsics {} {} {} {} {}",
        i.fx, i.fy, i.cx, i.cy, i.depth_scale
    )
    .expect("vec write");
    for (index, depth, labels) in &manifest.frames {
        writeln!(out, "frame {} {} {}", index, depth.display(), labels.display())
            .expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Load all frames of a scene directory, ordered by frame index.
///
/// Expects `manifest.txt` and `trajectory.txt` inside `dir`. The
/// trajectory must carry exactly one pose per manifest frame.
pub fn load_sequence(dir: impl AsRef<Path>) -> Result<Vec<Frame>> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir.join("manifest.txt"))?;
    let trajectory = read_trajectory(dir.join("trajectory.txt"))?;

    if trajectory.len() != manifest.frames.len() {
        return Err(Error::CountMismatch {
            what: "trajectory poses vs manifest frames".into(),
            expected: manifest.frames.len(),
            got: trajectory.len(),
        });
    }
    let poses: BTreeMap<usize, _> = trajectory.into_iter().collect();

    let mut frames = Vec::with_capacity(manifest.frames.len());
    for (index, depth_rel, labels_rel) in &manifest.frames {
        let pose = poses.get(index).ok_or_else(|| Error::CountMismatch {
            what: format!("trajectory pose for frame {index}"),
            expected: 1,
            got: 0,
        })?;
        let depth = read_depth_grid(dir.join(depth_rel))?;
        let labels = read_label_grid(dir.join(labels_rel))?;
        if depth.width != labels.width || depth.height != labels.height {
            return Err(Error::ShapeMismatch {
                frame: *index,
                dw: depth.width,
                dh: depth.height,
                lw: labels.width,
                lh: labels.height,
            });
        }
        frames.push(Frame {
            index: *index,
            depth,
            labels,
            intrinsics: manifest.intrinsics,
            initial_pose: *pose,
        });
    }
    frames.sort_by_key(|f| f.index);
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::io::{write_depth_grid, write_label_grid, write_trajectory, Grid};

    fn make_scene(dir: &Path, n: usize, poses: usize, label_w: usize) {
        std::fs::create_dir_all(dir.join("depth")).unwrap();
        std::fs::create_dir_all(dir.join("labels")).unwrap();
        let mut frames = Vec::new();
        for i in 0..n {
            let depth = Grid::<u16>::from_data(4, 3, vec![100 + i as u16; 12]).unwrap();
            let labels = Grid::<u8>::from_data(label_w, 3, vec![1; label_w * 3]).unwrap();
            let dp = format!("depth/{i:06}.d16");
            let lp = format!("labels/{i:06}.l8");
            write_depth_grid(&depth, dir.join(&dp)).unwrap();
            write_label_grid(&labels, dir.join(&lp)).unwrap();
            frames.push((i, PathBuf::from(dp), PathBuf::from(lp)));
        }
        let manifest = SceneManifest {
            intrinsics: CameraIntrinsics::new(2.0, 2.0, 2.0, 1.5, 0.001).unwrap(),
            frames,
        };
        write_manifest(&manifest, dir.join("manifest.txt")).unwrap();
        let traj: Vec<(usize, Pose)> = (0..poses)
            .map(|i| {
                (
                    i,
                    Pose::new(
                        nalgebra::UnitQuaternion::identity(),
                        nalgebra::Vector3::new(i as f64, 0.0, 0.0),
                    ),
                )
            })
            .collect();
        write_trajectory(&traj, dir.join("trajectory.txt")).unwrap();
    }

    #[test]
    fn loads_three_frames_with_exact_poses() {
        let dir = std::env::temp_dir().join("fpba-seq-ok");
        let _ = std::fs::remove_dir_all(&dir);
        make_scene(&dir, 3, 3, 4);
        let frames = load_sequence(&dir).unwrap();
        assert_eq!(frames.len(), 3);
        for (i, f) in frames.iter().enumerate() {
            assert_eq!(f.index, i);
            assert_eq!(f.initial_pose.translation().x, i as f64);
            assert_eq!(f.depth.at(0, 0), 100 + i as u16);
        }
    }

    #[test]
    fn shape_mismatch_is_error() {
        let dir = std::env::temp_dir().join("fpba-seq-shape");
        let _ = std::fs::remove_dir_all(&dir);
        make_scene(&dir, 2, 2, 5);
        assert!(matches!(
            load_sequence(&dir),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn pose_count_mismatch_is_error() {
        let dir = std::env::temp_dir().join("fpba-seq-count");
        let _ = std::fs::remove_dir_all(&dir);
        make_scene(&dir, 3, 2, 4);
        assert!(matches!(
            load_sequence(&dir),
            Err(Error::CountMismatch { .. })
        ));
    }
}
