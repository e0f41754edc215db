use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fpba_cli::{cmd_align, cmd_metrics, cmd_refine, cmd_synth, RunConfig, SynthConfig};
use fpba_core::ba::WallsStrategy;
use serde::Deserialize;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "fpba",
    about = "Floorplan-aware camera pose refinement for RGB-D scans",
    version
)]
struct Cli {
    /// Optional TOML config file; explicit flags win over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    show_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene directory with ground truth.
    Synth(SynthArgs),
    /// Estimate the floorplan-to-scan transform.
    Align(PipelineArgs),
    /// Refine camera poses against the floorplan.
    Refine(PipelineArgs),
    /// Compute reconstruction metrics for a scene.
    Metrics(PipelineArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output scene directory.
    #[arg(long)]
    out: PathBuf,
    /// Floorplan to build the scene from (default: built-in 3 rooms).
    #[arg(long)]
    floorplan: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-step rotation drift, degrees.
    #[arg(long, default_value_t = 0.1)]
    drift_rot_deg: f64,
    /// Per-step translation drift, meters.
    #[arg(long, default_value_t = 0.003)]
    drift_t: f64,
    /// Keypoint pixel noise (std).
    #[arg(long, default_value_t = 0.0)]
    pixel_noise: f64,
    /// Fraction of matches rewired to a wrong landmark.
    #[arg(long, default_value_t = 0.0)]
    mismatch_rate: f64,
    /// Gaussian depth noise before quantization, meters.
    #[arg(long, default_value_t = 0.0)]
    depth_noise: f64,
}

#[derive(Args, Default, Clone)]
struct PipelineArgs {
    /// Scene directory (manifest.txt, trajectory.txt, ...).
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Floorplan file (default: <scene>/floorplan.txt).
    #[arg(long)]
    floorplan: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reference cloud for NND (.fbc).
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    lambda_floor: Option<f64>,
    #[arg(long)]
    lambda_walls: Option<f64>,
    /// np, inw or fnw.
    #[arg(long)]
    walls_strategy: Option<String>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_reduced: Option<f64>,
    #[arg(long)]
    lr_switch_step: Option<usize>,
    #[arg(long)]
    convergence_eps: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    realign_period: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Pixel stride for backprojection.
    #[arg(long)]
    stride: Option<usize>,
    /// Neighborhood radius for MME/MPV/MOM, meters.
    #[arg(long)]
    radius: Option<f64>,
    /// Floorplan sampling density, points per square meter.
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    normals_k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Config-file counterpart of the pipeline flags.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    scene: Option<PathBuf>,
    floorplan: Option<PathBuf>,
    out: Option<PathBuf>,
    reference: Option<PathBuf>,
    lambda_floor: Option<f64>,
    lambda_walls: Option<f64>,
    walls_strategy: Option<String>,
    lr: Option<f64>,
    lr_reduced: Option<f64>,
    lr_switch_step: Option<usize>,
    convergence_eps: Option<f64>,
    momentum: Option<f64>,
    realign_period: Option<usize>,
    max_steps: Option<usize>,
    stride: Option<usize>,
    radius: Option<f64>,
    density: Option<f64>,
    normals_k: Option<usize>,
    seed: Option<u64>,
}

fn build_run_config(args: &PipelineArgs, file: &FileConfig) -> Result<RunConfig> {
    let scene = args
        .scene
        .clone()
        .or_else(|| file.scene.clone())
        .context("--scene is required")?;
    let out = args
        .out
        .clone()
        .or_else(|| file.out.clone())
        .context("--out is required")?;
    let mut cfg = RunConfig::new(scene, out);
    cfg.floorplan = args.floorplan.clone().or_else(|| file.floorplan.clone());
    cfg.reference = args.reference.clone().or_else(|| file.reference.clone());

    macro_rules! merge {
        ($target:expr, $flag:expr, $file:expr) => {
            if let Some(v) = $flag.or($file) {
                $target = v;
            }
        };
    }
    merge!(cfg.ba.lambda_floor, args.lambda_floor, file.lambda_floor);
    merge!(cfg.ba.lambda_walls, args.lambda_walls, file.lambda_walls);
    merge!(cfg.ba.lr_initial, args.lr, file.lr);
    merge!(cfg.ba.lr_reduced, args.lr_reduced, file.lr_reduced);
    merge!(
        cfg.ba.lr_switch_step,
        args.lr_switch_step,
        file.lr_switch_step
    );
    merge!(
        cfg.ba.convergence_eps,
        args.convergence_eps,
        file.convergence_eps
    );
    merge!(cfg.ba.momentum, args.momentum, file.momentum);
    merge!(
        cfg.ba.realign_period,
        args.realign_period,
        file.realign_period
    );
    merge!(cfg.ba.max_steps, args.max_steps, file.max_steps);
    merge!(cfg.stride, args.stride, file.stride);
    merge!(cfg.radius, args.radius, file.radius);
    merge!(cfg.density, args.density, file.density);
    merge!(cfg.normals_k, args.normals_k, file.normals_k);
    merge!(cfg.seed, args.seed, file.seed);

    if let Some(s) = args
        .walls_strategy
        .as_deref()
        .or(file.walls_strategy.as_deref())
    {
        cfg.ba.walls_strategy = s.parse::<WallsStrategy>()?;
    }
    cfg.ba.validate()?;
    Ok(cfg)
}

fn load_file_config(path: Option<&PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config file {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config file {}", p.display()))
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = load_file_config(cli.config.as_ref())?;

    if cli.show_config {
        // Print the effective configuration: defaults, overridden by the
        // config file, overridden by any pipeline flags.
        let mut args = match &cli.command {
            Some(Command::Align(a)) | Some(Command::Refine(a)) | Some(Command::Metrics(a)) => {
                a.clone()
            }
            _ => PipelineArgs::default(),
        };
        args.scene = args.scene.or(Some(PathBuf::from(".")));
        args.out = args.out.or(Some(PathBuf::from("out")));
        let cfg = build_run_config(&args, &file)?;
        print!("{}", cfg.render());
        return Ok(());
    }

    match cli.command {
        None => bail!("a subcommand is required (synth, align, refine, metrics)"),
        Some(Command::Synth(a)) => {
            let mut cfg = SynthConfig::new(a.out);
            cfg.floorplan = a.floorplan;
            cfg.frames = a.frames;
            cfg.seed = a.seed;
            cfg.drift_rot_deg = a.drift_rot_deg;
            cfg.drift_t = a.drift_t;
            cfg.pixel_noise = a.pixel_noise;
            cfg.mismatch_rate = a.mismatch_rate;
            cfg.depth_noise = a.depth_noise;
            cmd_synth(&cfg)
        }
        Some(Command::Align(a)) => cmd_align(&build_run_config(&a, &file)?),
        Some(Command::Refine(a)) => cmd_refine(&build_run_config(&a, &file)?),
        Some(Command::Metrics(a)) => cmd_metrics(&build_run_config(&a, &file)?),
    }
}
