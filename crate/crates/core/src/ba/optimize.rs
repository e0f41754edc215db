//! Gradient descent with momentum over the pose set, with the learning
//! rate schedule, convergence test and periodic re-alignment.

use super::cluster::{cluster_walls, ClusterParams};
use super::losses::{total_loss, LossState, LossTerms};
use super::{BAConfig, FixedWallAssignment, FloorModel, MatchSet, WallsStrategy};
use crate::alignment::align;
use crate::clouds::{repose_clouds, SemanticClouds};
use crate::error::{Error, Result};
use crate::floorplan::{build_floorplan3d, Floorplan3D};
use crate::geometry::{PointCloud, Pose};
use crate::io::Floorplan2D;
use nalgebra::Vector3;
use std::io::Write;
use std::path::Path;

/// One line of the convergence log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub total: f64,
    pub geom: f64,
    pub floor: f64,
    pub walls: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceLog {
    pub records: Vec<StepRecord>,
    /// True when the run stopped because the loss delta fell below the
    /// threshold (rather than hitting max_steps).
    pub terminated_by_eps: bool,
    pub realignments: usize,
    pub warnings: Vec<String>,
}

/// Write the log as line-oriented records: step, lr, total and the three
/// terms.
pub fn write_convergence_log(log: &ConvergenceLog, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    writeln!(out, "# step lr total geom floor walls").expect("vec write");
    for r in &log.records {
        writeln!(
            out,
            "{} {} {} {} {} {}",
            r.step, r.lr, r.total, r.geom, r.floor, r.walls
        )
        .expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// What periodic re-alignment needs: the current floorplan (in scan
/// coordinates) and the parameters used to rebuild its 3D model.
#[derive(Debug, Clone)]
pub struct RealignContext {
    pub floorplan: Floorplan2D,
    pub density: f64,
    pub seed: u64,
    pub cluster_params: ClusterParams,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub poses: Vec<Pose>,
    pub log: ConvergenceLog,
    /// Floorplan after any re-alignments (present when a realign context
    /// was given).
    pub floorplan: Option<Floorplan2D>,
    pub fp3d: Floorplan3D,
    pub assignment: Option<FixedWallAssignment>,
}

/// Minimize the total loss over the camera poses.
///
/// The learning rate is `lr_initial` through step `lr_switch_step` and
/// `lr_reduced` after; once switched, the run stops when the loss delta
/// between consecutive steps falls below `convergence_eps`. Every
/// `realign_period` steps the scan-to-floorplan alignment is re-run (and
/// the fixed wall assignment rebuilt) when a [`RealignContext`] is given.
///
/// The fixed nearest wall strategy and re-alignment both require
/// `clouds.full` to carry normals (estimated at the initial poses; they
/// are rotated along with the poses as needed).
pub fn optimize_poses(
    initial_poses: &[Pose],
    matches: &MatchSet,
    clouds: &SemanticClouds,
    fp3d: &Floorplan3D,
    floor: &FloorModel,
    config: &BAConfig,
    realign: Option<RealignContext>,
) -> Result<OptimizeResult> {
    config.validate()?;
    let n_frames = initial_poses.len();
    let mut log = ConvergenceLog::default();

    let needs_normals = config.walls_strategy == WallsStrategy::FixedNearestWall
        || (config.realign_period > 0 && realign.is_some());
    if needs_normals && clouds.full.normals.is_none() {
        return Err(Error::InvalidParameter(
            "fixed nearest wall and re-alignment need scan normals".into(),
        ));
    }

    for f in 0..n_frames {
        let in_matches = matches
            .pairs
            .iter()
            .any(|p| p.frame_a as usize == f || p.frame_b as usize == f);
        let has_points = clouds
            .full
            .provenance
            .as_ref()
            .map(|prov| prov.iter().any(|pr| pr.frame == f))
            .unwrap_or(false);
        if !in_matches && !has_points {
            log.warnings
                .push(format!("frame {f}: no matches and no points; pose kept fixed"));
        }
    }

    let cluster_params = realign
        .as_ref()
        .map(|r| r.cluster_params)
        .unwrap_or_default();
    let mut fp3d_cur = fp3d.clone();
    let mut plan_cur = realign.as_ref().map(|r| r.floorplan.clone());
    let mut poses: Vec<Pose> = initial_poses.to_vec();

    let mut assignment = match config.walls_strategy {
        WallsStrategy::FixedNearestWall => {
            let walls = walls_with_normals(clouds, initial_poses, &poses)?;
            let (a, matched) = cluster_walls(&walls, &fp3d_cur, &cluster_params);
            if a.is_empty() {
                log.warnings
                    .push("fixed nearest wall: empty assignment (no matched wall planes)".into());
            } else {
                log.warnings
                    .push(format!("fixed nearest wall: matched {matched} wall planes"));
            }
            Some(a)
        }
        _ => None,
    };

    let mut vel_t = vec![Vector3::zeros(); n_frames];
    let mut vel_r = vec![Vector3::zeros(); n_frames];
    let mut prev_total: Option<f64> = None;

    for step in 1..=config.max_steps {
        if config.realign_period > 0 && step > 1 && (step - 1) % config.realign_period == 0 {
            if let Some(ctx) = realign.as_ref() {
                match do_realign(
                    clouds,
                    initial_poses,
                    &poses,
                    plan_cur.as_ref().expect("context implies plan"),
                    &fp3d_cur,
                    ctx,
                ) {
                    Ok((plan, fp3d_new)) => {
                        fp3d_cur = fp3d_new;
                        plan_cur = Some(plan);
                        log.realignments += 1;
                        if config.walls_strategy == WallsStrategy::FixedNearestWall {
                            let walls = walls_with_normals(clouds, initial_poses, &poses)?;
                            let (a, _) = cluster_walls(&walls, &fp3d_cur, &cluster_params);
                            assignment = Some(a);
                        }
                        log.warnings.push(format!("step {step}: re-aligned"));
                    }
                    Err(e) => {
                        log.warnings
                            .push(format!("step {step}: re-alignment skipped ({e})"));
                    }
                }
            }
        }

        let state = LossState {
            matches,
            clouds,
            fp3d: &fp3d_cur,
            floor,
            assignment: assignment.as_ref(),
        };
        let (terms, grads) = total_loss(&state, &poses, config);
        check_finite(&terms, step)?;

        let lr = if step <= config.lr_switch_step {
            config.lr_initial
        } else {
            config.lr_reduced
        };
        log.records.push(StepRecord {
            step,
            lr,
            total: terms.total,
            geom: terms.geom,
            floor: terms.floor,
            walls: terms.walls,
        });

        if step > config.lr_switch_step {
            if let Some(prev) = prev_total {
                if (terms.total - prev).abs() < config.convergence_eps {
                    log.terminated_by_eps = true;
                    break;
                }
            }
        }
        prev_total = Some(terms.total);

        for f in 0..n_frames {
            vel_t[f] = config.momentum * vel_t[f] + grads.d_translation[f];
            vel_r[f] = config.momentum * vel_r[f] + grads.d_rotation[f];
            poses[f] = poses[f].retract(&(-lr * vel_t[f]), &(-lr * vel_r[f]));
        }
    }

    Ok(OptimizeResult {
        poses,
        log,
        floorplan: plan_cur,
        fp3d: fp3d_cur,
        assignment,
    })
}

fn check_finite(terms: &LossTerms, step: usize) -> Result<()> {
    for (name, v) in [
        ("geometric", terms.geom),
        ("floor", terms.floor),
        ("walls", terms.walls),
        ("total", terms.total),
    ] {
        if !v.is_finite() {
            return Err(Error::NanLoss { term: name, step });
        }
    }
    Ok(())
}

/// Walls cloud at the current poses, with the initial-pose normals
/// rotated by each frame's pose change.
fn walls_with_normals(
    clouds: &SemanticClouds,
    initial_poses: &[Pose],
    poses: &[Pose],
) -> Result<PointCloud> {
    let full_normals = clouds
        .full
        .normals
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("scan normals missing".into()))?;
    let deltas: Vec<_> = initial_poses
        .iter()
        .zip(poses)
        .map(|(a, b)| b.rotation() * a.rotation().inverse())
        .collect();

    let mut points = Vec::with_capacity(clouds.walls.len());
    let mut normals = Vec::with_capacity(clouds.walls.len());
    for i in 0..clouds.walls.len() {
        let frame = clouds.walls_frame(i);
        points.push(poses[frame].transform_point(clouds.walls_cam(i)));
        let n = full_normals[clouds.walls_in_full[i] as usize];
        normals.push(if n.norm_squared() > 0.0 {
            deltas[frame] * n
        } else {
            n
        });
    }
    Ok(PointCloud {
        points,
        normals: Some(normals),
        provenance: clouds.walls.provenance.clone(),
    })
}

/// Re-run the scan-to-floorplan alignment against the current poses and
/// rebuild the 3D floorplan in its new place.
fn do_realign(
    clouds: &SemanticClouds,
    initial_poses: &[Pose],
    poses: &[Pose],
    plan: &Floorplan2D,
    fp3d: &Floorplan3D,
    ctx: &RealignContext,
) -> Result<(Floorplan2D, Floorplan3D)> {
    let reposed = repose_clouds(clouds, poses)?;
    let full_normals = clouds
        .full
        .normals
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("scan normals missing".into()))?;
    let deltas: Vec<_> = initial_poses
        .iter()
        .zip(poses)
        .map(|(a, b)| b.rotation() * a.rotation().inverse())
        .collect();
    let prov = clouds.full.provenance.as_ref().expect("provenance");
    let normals: Vec<Vector3<f64>> = full_normals
        .iter()
        .zip(prov)
        .map(|(n, pr)| {
            if n.norm_squared() > 0.0 {
                deltas[pr.frame] * n
            } else {
                *n
            }
        })
        .collect();
    let scan = PointCloud {
        points: reposed.full.points,
        normals: Some(normals),
        provenance: None,
    };
    let ups: Vec<Vector3<f64>> = poses
        .iter()
        .map(|p| p.rotate_vector(&Vector3::new(0.0, -1.0, 0.0)))
        .collect();

    let (transform, _) = align(&scan, fp3d, Some(&ups))?;
    let plan_new = transform.apply_to_floorplan(plan);
    let fp3d_new = build_floorplan3d(&plan_new, fp3d.y_min, fp3d.y_max, ctx.density, ctx.seed)?;
    Ok((plan_new, fp3d_new))
}
