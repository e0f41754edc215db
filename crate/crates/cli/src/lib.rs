//! Pipeline commands behind the `fpba` binary: synthesize, align, refine
//! and evaluate. Each command reads a scene directory in the formats
//! described in `FORMATS.md` and writes its artifacts under an output
//! directory.

use anyhow::{bail, Context, Result};
use fpba_core::alignment::{align, estimate_gravity, gravity_correction, AlignDiagnostics, SimilarityTransform};
use fpba_core::ba::{
    optimize_poses, write_convergence_log, BAConfig, ClusterParams, FloorModel, MatchSet,
    RealignContext,
};
use fpba_core::clouds::{build_semantic_clouds, repose_clouds, SemanticClouds};
use fpba_core::floorplan::build_floorplan3d;
use fpba_core::geometry::{estimate_normals, PointCloud, Pose};
use fpba_core::io::{
    export_cloud, import_cloud, load_matches, load_sequence, parse_floorplan, read_trajectory,
    write_trajectory, Floorplan2D, Frame, LabelMap,
};
use fpba_core::metrics::{mme, mom, mpv, nnd, nsd, MetricsReport, MomParams};
use fpba_core::synth::{
    ate_rmse, ate_rmse_aligned, generate_scene, perturb_poses, synth_matches, write_scene,
    DriftSpec, SceneSpec,
};
use nalgebra::Vector3;
use std::fmt::Write as _;
use std::path::PathBuf;

/// Everything a pipeline command needs; built by the binary from flags
/// plus an optional config file (flags win).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scene: PathBuf,
    pub floorplan: Option<PathBuf>,
    pub out: PathBuf,
    pub reference: Option<PathBuf>,
    pub ba: BAConfig,
    pub stride: usize,
    pub radius: f64,
    pub density: f64,
    pub normals_k: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(scene: PathBuf, out: PathBuf) -> Self {
        RunConfig {
            scene,
            floorplan: None,
            out,
            reference: None,
            ba: BAConfig::default(),
            stride: 4,
            radius: fpba_core::metrics::DEFAULT_RADIUS,
            density: fpba_core::floorplan::DEFAULT_DENSITY,
            normals_k: 16,
            seed: 0,
        }
    }

    /// The floorplan path: explicit flag, or the scene's own
    /// `floorplan.txt` when present.
    pub fn floorplan_path(&self) -> Option<PathBuf> {
        if let Some(p) = &self.floorplan {
            return Some(p.clone());
        }
        let default = self.scene.join("floorplan.txt");
        default.exists().then_some(default)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scene: {}", self.scene.display());
        let _ = writeln!(s, "out: {}", self.out.display());
        let _ = writeln!(
            s,
            "floorplan: {}",
            self.floorplan
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "<scene>/floorplan.txt".into())
        );
        let _ = writeln!(s, "lambda_floor: {}", self.ba.lambda_floor);
        let _ = writeln!(s, "lambda_walls: {}", self.ba.lambda_walls);
        let _ = writeln!(s, "walls_strategy: {}", self.ba.walls_strategy);
        let _ = writeln!(s, "lr: {}", self.ba.lr_initial);
        let _ = writeln!(s, "lr_reduced: {}", self.ba.lr_reduced);
        let _ = writeln!(s, "lr_switch_step: {}", self.ba.lr_switch_step);
        let _ = writeln!(s, "convergence_eps: {}", self.ba.convergence_eps);
        let _ = writeln!(s, "momentum: {}", self.ba.momentum);
        let _ = writeln!(s, "realign_period: {}", self.ba.realign_period);
        let _ = writeln!(s, "max_steps: {}", self.ba.max_steps);
        let _ = writeln!(s, "stride: {}", self.stride);
        let _ = writeln!(s, "radius: {}", self.radius);
        let _ = writeln!(s, "density: {}", self.density);
        let _ = writeln!(s, "normals_k: {}", self.normals_k);
        let _ = writeln!(s, "seed: {}", self.seed);
        s
    }
}

/// Options of the `synth` command.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub out: PathBuf,
    pub floorplan: Option<PathBuf>,
    pub frames: usize,
    pub seed: u64,
    /// Per-step drift (degrees / meters).
    pub drift_rot_deg: f64,
    pub drift_t: f64,
    pub pixel_noise: f64,
    pub mismatch_rate: f64,
    pub depth_noise: f64,
}

impl SynthConfig {
    pub fn new(out: PathBuf) -> Self {
        SynthConfig {
            out,
            floorplan: None,
            frames: 100,
            seed: 0,
            drift_rot_deg: 0.1,
            drift_t: 0.003,
            pixel_noise: 0.0,
            mismatch_rate: 0.0,
            depth_noise: 0.0,
        }
    }
}

/// Generate a synthetic scene directory.
pub fn cmd_synth(cfg: &SynthConfig) -> Result<()> {
    let mut spec = SceneSpec::three_rooms(cfg.seed);
    if let Some(path) = &cfg.floorplan {
        spec.floorplan = parse_floorplan(path).context("parsing floorplan")?;
    }
    spec.n_frames = cfg.frames;
    spec.depth_noise_sigma = cfg.depth_noise;

    let (scene, frames) = generate_scene(&spec).context("generating scene")?;
    let perturbed = perturb_poses(
        &scene.trajectory,
        &DriftSpec {
            sigma_rot: cfg.drift_rot_deg.to_radians(),
            sigma_t: cfg.drift_t,
        },
        cfg.seed ^ 0xd1f7,
    );
    let matches = synth_matches(&scene, cfg.pixel_noise, cfg.mismatch_rate, cfg.seed ^ 0x3a11);
    write_scene(&cfg.out, &scene, &frames, &perturbed, &matches)
        .context("writing scene directory")?;
    eprintln!(
        "synth: {} frames, {} landmarks, {} matches -> {}",
        frames.len(),
        scene.landmarks.len(),
        matches.len(),
        cfg.out.display()
    );
    Ok(())
}

/// Loaded scene plus the derived structures shared by align / refine /
/// metrics.
struct Prepared {
    frames: Vec<Frame>,
    poses: Vec<Pose>,
    clouds: SemanticClouds,
    ups: Vec<Vector3<f64>>,
    y_min: f64,
    y_max: f64,
    warnings: Vec<String>,
}

fn prepare(cfg: &RunConfig, with_normals: bool) -> Result<Prepared> {
    let frames = load_sequence(&cfg.scene).context("loading scene")?;
    let poses: Vec<Pose> = frames.iter().map(|f| f.initial_pose).collect();
    let mut clouds = build_semantic_clouds(&frames, &poses, cfg.stride, LabelMap::default())
        .context("building semantic clouds")?;
    if clouds.full.is_empty() {
        bail!("scene produced an empty scan (all depth invalid?)");
    }
    let mut warnings = Vec::new();
    let ups: Vec<Vector3<f64>> = poses
        .iter()
        .map(|p| p.rotate_vector(&Vector3::new(0.0, -1.0, 0.0)))
        .collect();

    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;

    if with_normals {
        let viewpoints: Vec<Vector3<f64>> = poses.iter().map(|p| *p.translation()).collect();
        let with_n = estimate_normals(&clouds.full, cfg.normals_k, Some(&viewpoints))
            .context("estimating scan normals")?;
        clouds.full.normals = with_n.normals;

        // The pipeline assumes a gravity-aligned world (y up). Report
        // when the scan disagrees; below half a degree this is noise.
        let gravity =
            estimate_gravity(&clouds.full, Some(&ups)).context("estimating gravity")?;
        let correction = gravity_correction(&gravity.direction).angle();
        if gravity.low_confidence {
            warnings.push("gravity: no dominant normal direction (low confidence)".into());
        }
        if correction.to_degrees() > 0.5 {
            warnings.push(format!(
                "gravity: scan deviates {:.2} degrees from y-up; floorplan terms assume a gravity-aligned world",
                correction.to_degrees()
            ));
        }
    }

    for p in &clouds.full.points {
        y_min = y_min.min(p.y);
        y_max = y_max.max(p.y);
    }

    Ok(Prepared {
        frames,
        poses,
        clouds,
        ups,
        y_min,
        y_max,
        warnings,
    })
}

fn render_transform(t: &SimilarityTransform, diag: &AlignDiagnostics) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "yaw_rad: {}", t.yaw);
    let _ = writeln!(s, "scale: {}", t.scale);
    let _ = writeln!(s, "shift: {} {} {}", t.shift.x, t.shift.y, t.shift.z);
    let _ = writeln!(s, "gravity_low_confidence: {}", diag.gravity.low_confidence);
    let _ = writeln!(
        s,
        "gravity_correction_rad: {}",
        diag.gravity_correction_angle
    );
    let _ = writeln!(s, "boundary_points: {}", diag.boundary_points);
    let _ = writeln!(s, "residual_mean_nn: {}", diag.residual);
    let costs: Vec<String> = diag.candidates.iter().map(|c| c.cost.to_string()).collect();
    let _ = writeln!(s, "candidate_costs: {}", costs.join(" "));
    s
}

/// Estimate the floorplan-to-scan transform and write the record.
pub fn cmd_align(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out).context("creating output directory")?;
    let prep = prepare(cfg, true)?;
    let plan_path = cfg
        .floorplan_path()
        .context("no floorplan (pass --floorplan or add floorplan.txt to the scene)")?;
    let fp2d = parse_floorplan(&plan_path).context("parsing floorplan")?;
    let fp3d = build_floorplan3d(&fp2d, prep.y_min, prep.y_max, cfg.density, cfg.seed)
        .context("building 3D floorplan")?;
    let (transform, diag) =
        align(&prep.clouds.full, &fp3d, Some(&prep.ups)).context("alignment")?;

    let record = render_transform(&transform, &diag);
    std::fs::write(cfg.out.join("transform.txt"), &record)
        .context("writing transform record")?;
    print!("{record}");
    for w in &prep.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

struct MetricsInputs<'a> {
    frames: &'a [Frame],
    poses: &'a [Pose],
    full: &'a PointCloud,
    walls: &'a PointCloud,
    plan: Option<&'a Floorplan2D>,
    reference: Option<&'a PointCloud>,
}

fn compute_metrics(inp: &MetricsInputs, radius: f64, stride: usize, seed: u64) -> MetricsReport {
    let mut warnings = Vec::new();
    let mme_v = match mme(inp.full, radius) {
        Ok(v) => Some(v),
        Err(e) => {
            warnings.push(format!("mme failed: {e}"));
            None
        }
    };
    let mpv_v = match mpv(inp.full, radius) {
        Ok(v) => Some(v),
        Err(e) => {
            warnings.push(format!("mpv failed: {e}"));
            None
        }
    };
    let mom_params = MomParams {
        stride,
        seed,
        ..MomParams::default()
    };
    let (mom_v, used, skipped) = match mom(inp.frames, inp.poses, inp.full, radius, &mom_params) {
        Ok((v, d)) => (Some(v), d.frames_used, d.frames_skipped),
        Err(e) => {
            warnings.push(format!("mom failed: {e}"));
            (None, 0, inp.frames.len())
        }
    };
    let nnd_v = match inp.reference {
        Some(reference) => match nnd(inp.full, reference) {
            Ok(v) => Some(v),
            Err(e) => {
                warnings.push(format!("nnd failed: {e}"));
                None
            }
        },
        None => None,
    };
    let nsd_v = match inp.plan {
        Some(plan) => match nsd(inp.walls, plan) {
            Ok(v) => Some(v),
            Err(e) => {
                warnings.push(format!("nsd failed: {e}"));
                None
            }
        },
        None => {
            warnings.push("nsd skipped: no floorplan".into());
            None
        }
    };
    MetricsReport {
        mme: mme_v,
        mpv: mpv_v,
        mom: mom_v,
        nnd: nnd_v,
        nsd: nsd_v,
        radius,
        mom_frames_used: used,
        mom_frames_skipped: skipped,
        warnings,
    }
}

/// Compute the metric report for a scene as stored on disk.
pub fn cmd_metrics(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out).context("creating output directory")?;
    let prep = prepare(cfg, false)?;
    let plan = match cfg.floorplan_path() {
        Some(p) => Some(parse_floorplan(&p).context("parsing floorplan")?),
        None => None,
    };
    let reference = match &cfg.reference {
        Some(p) => Some(import_cloud(p).context("importing reference cloud")?),
        None => None,
    };
    let report = compute_metrics(
        &MetricsInputs {
            frames: &prep.frames,
            poses: &prep.poses,
            full: &prep.clouds.full,
            walls: &prep.clouds.walls,
            plan: plan.as_ref(),
            reference: reference.as_ref(),
        },
        cfg.radius,
        cfg.stride,
        cfg.seed,
    );
    report
        .write(cfg.out.join("metrics.txt"))
        .context("writing metrics report")?;
    print!("{}", report.render());
    Ok(())
}

/// The full refinement pipeline: align the floorplan, optimize the
/// poses, and report metrics before and after.
pub fn cmd_refine(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out).context("creating output directory")?;
    let mut prep = prepare(cfg, true)?;
    let plan_path = cfg
        .floorplan_path()
        .context("no floorplan (pass --floorplan or add floorplan.txt to the scene)")?;
    let fp2d = parse_floorplan(&plan_path).context("parsing floorplan")?;

    // Align the floorplan into scan coordinates.
    let fp3d = build_floorplan3d(&fp2d, prep.y_min, prep.y_max, cfg.density, cfg.seed)
        .context("building 3D floorplan")?;
    let (transform, align_diag) =
        align(&prep.clouds.full, &fp3d, Some(&prep.ups)).context("alignment")?;
    let plan_aligned = transform.apply_to_floorplan(&fp2d);
    let fp3d = build_floorplan3d(&plan_aligned, prep.y_min, prep.y_max, cfg.density, cfg.seed)
        .context("rebuilding aligned 3D floorplan")?;
    std::fs::write(
        cfg.out.join("transform.txt"),
        render_transform(&transform, &align_diag),
    )
    .context("writing transform record")?;

    // Fit the floor plane once.
    let mut ba_config = cfg.ba.clone();
    let floor_model = if prep.clouds.floor.len() >= 3 {
        FloorModel::fit(&prep.clouds.floor).context("fitting floor plane")?
    } else {
        prep.warnings
            .push("no floor points: floor term disabled".into());
        ba_config.lambda_floor = 0.0;
        FloorModel {
            plane: fpba_core::geometry::Plane::new(Vector3::new(0.0, 1.0, 0.0), 0.0).unwrap(),
        }
    };

    // Keypoint matches.
    let matches_path = cfg.scene.join("matches.txt");
    let match_set = if matches_path.exists() {
        let sizes: Vec<(usize, usize)> = prep
            .frames
            .iter()
            .map(|f| (f.depth.width, f.depth.height))
            .collect();
        let load = load_matches(&matches_path, &sizes).context("loading matches")?;
        if load.dropped_out_of_bounds > 0 {
            prep.warnings.push(format!(
                "matches: dropped {} out-of-bounds records",
                load.dropped_out_of_bounds
            ));
        }
        let (set, skipped) = MatchSet::from_keypoint_matches(&prep.frames, &load.matches);
        if skipped > 0 {
            prep.warnings
                .push(format!("matches: {skipped} records had no depth"));
        }
        set
    } else {
        prep.warnings
            .push("no matches.txt: geometric term is empty".into());
        MatchSet::default()
    };

    // Reference for NND and ATE: the ground-truth trajectory when the
    // scene carries one.
    let gt_path = cfg.scene.join("gt_trajectory.txt");
    let gt_poses: Option<Vec<Pose>> = if gt_path.exists() {
        let gt = read_trajectory(&gt_path).context("reading ground-truth trajectory")?;
        Some(gt.into_iter().map(|(_, p)| p).collect())
    } else {
        None
    };
    let reference_cloud = match (&cfg.reference, &gt_poses) {
        (Some(p), _) => Some(import_cloud(p).context("importing reference cloud")?),
        (None, Some(gt)) => Some(
            repose_clouds(&prep.clouds, gt)
                .context("building reference cloud from ground truth")?
                .full,
        ),
        (None, None) => None,
    };

    // Metrics and cloud before refinement.
    let before = compute_metrics(
        &MetricsInputs {
            frames: &prep.frames,
            poses: &prep.poses,
            full: &prep.clouds.full,
            walls: &prep.clouds.walls,
            plan: Some(&plan_aligned),
            reference: reference_cloud.as_ref(),
        },
        cfg.radius,
        cfg.stride,
        cfg.seed,
    );
    before
        .write(cfg.out.join("metrics_before.txt"))
        .context("writing metrics_before")?;
    export_cloud(&prep.clouds.full, cfg.out.join("cloud_before.fbc"))
        .context("exporting cloud_before")?;

    // Optimize.
    let realign = RealignContext {
        floorplan: plan_aligned.clone(),
        density: cfg.density,
        seed: cfg.seed,
        cluster_params: ClusterParams::default(),
    };
    let result = optimize_poses(
        &prep.poses,
        &match_set,
        &prep.clouds,
        &fp3d,
        &floor_model,
        &ba_config,
        Some(realign),
    )
    .context("optimizing poses")?;

    // Artifacts after refinement.
    let indexed: Vec<(usize, Pose)> = prep
        .frames
        .iter()
        .zip(&result.poses)
        .map(|(f, p)| (f.index, *p))
        .collect();
    write_trajectory(&indexed, cfg.out.join("refined_trajectory.txt"))
        .context("writing refined trajectory")?;
    write_convergence_log(&result.log, cfg.out.join("convergence.txt"))
        .context("writing convergence log")?;

    let clouds_after = repose_clouds(&prep.clouds, &result.poses).context("reposing clouds")?;
    export_cloud(&clouds_after.full, cfg.out.join("cloud_after.fbc"))
        .context("exporting cloud_after")?;

    let plan_final = result.floorplan.as_ref().unwrap_or(&plan_aligned);
    let after = compute_metrics(
        &MetricsInputs {
            frames: &prep.frames,
            poses: &result.poses,
            full: &clouds_after.full,
            walls: &clouds_after.walls,
            plan: Some(plan_final),
            reference: reference_cloud.as_ref(),
        },
        cfg.radius,
        cfg.stride,
        cfg.seed,
    );
    after
        .write(cfg.out.join("metrics_after.txt"))
        .context("writing metrics_after")?;

    // Run report.
    let mut report = String::new();
    let _ = writeln!(report, "steps: {}", result.log.records.len());
    let _ = writeln!(report, "terminated_by_eps: {}", result.log.terminated_by_eps);
    let _ = writeln!(report, "realignments: {}", result.log.realignments);
    if let (Some(gt), true) = (&gt_poses, !result.poses.is_empty()) {
        let _ = writeln!(report, "ate_before: {}", ate_rmse(&prep.poses, gt));
        let _ = writeln!(report, "ate_after: {}", ate_rmse(&result.poses, gt));
        let _ = writeln!(
            report,
            "ate_aligned_before: {}",
            ate_rmse_aligned(&prep.poses, gt)
        );
        let _ = writeln!(
            report,
            "ate_aligned_after: {}",
            ate_rmse_aligned(&result.poses, gt)
        );
    }
    if let (Some(first), Some(last)) = (result.log.records.first(), result.log.records.last()) {
        let _ = writeln!(report, "loss_initial: {}", first.total);
        let _ = writeln!(report, "loss_final: {}", last.total);
    }
    for w in prep.warnings.iter().chain(&result.log.warnings) {
        let _ = writeln!(report, "warning: {w}");
    }
    std::fs::write(cfg.out.join("report.txt"), &report).context("writing run report")?;
    print!("{report}");
    Ok(())
}
