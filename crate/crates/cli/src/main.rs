//! `cnm`: synthesize sequences, train continual maps and baselines, and
//! evaluate checkpoints.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use cnm_core::checkpoint::{checkpoint_file_name, Checkpoint};
use cnm_core::eval::{self, NetworkField, SampleGrid, SliceAxis, DEFAULT_FORGET_THRESHOLD};
use cnm_core::geometry::{backproject, Vec3};
use cnm_core::scene::{
    camera_path, format_trajectory, render_synthetic_depth, write_depth_png_meters, CameraPath, NormalizationTransform,
    SequenceEntry, SequenceManifest, SyntheticScene, DEFAULT_DEPTH_SCALE,
};
use cnm_core::trainer::{loss_reports_csv, run_baseline_with, BaselineMode, LossReport, TrainConfig};

const MANIFEST: &str = "manifest.txt";
const CONFIG_COPY: &str = "config.txt";
/// Overrides the worker thread count.
const THREADS_ENV: &str = "CNM_THREADS";

#[derive(Parser)]
#[command(name = "cnm", version, about = "Continual neural mapping experiments")]
#[command(after_help = "Environment: CNM_THREADS sets the number of worker threads; RUST_LOG the log level.\n\
Exit codes: 0 success, 2 bad input, 3 numerical divergence.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Session config (key = value lines)
    #[arg(long)]
    config: PathBuf,
    /// Sequence directory holding manifest.txt, or a manifest file
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoints and loss reports
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Directory of theta_####.cnm checkpoints
    #[arg(long)]
    ckpts: PathBuf,
    /// Sequence directory holding manifest.txt, or a manifest file
    #[arg(long)]
    data: PathBuf,
    /// Config giving frame and pixel strides [default: <ckpts>/config.txt if present]
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Render a depth sequence of an analytic scene
    Synth {
        /// Scene description (key-value primitives)
        #[arg(long)]
        scene: PathBuf,
        /// Number of frames
        #[arg(long)]
        frames: usize,
        /// Camera path: orbit, line or pan
        #[arg(long, default_value = "orbit")]
        traj: String,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the continual map with replay
    Train(TrainArgs),
    /// Train a comparison baseline
    Baseline {
        /// finetune, retrain, reinit or replay
        #[arg(long)]
        mode: String,
        #[command(flatten)]
        args: TrainArgs,
    },
    /// Frame × checkpoint mean |SDF| matrix (CSV, meters)
    Heatmap {
        #[command(flatten)]
        args: EvalArgs,
    },
    /// Fraction of frame-0 points with |f| under a threshold, per checkpoint (CSV)
    Forget {
        #[command(flatten)]
        args: EvalArgs,
        /// Threshold in normalized units
        #[arg(long, default_value_t = DEFAULT_FORGET_THRESHOLD)]
        threshold: f64,
    },
    /// Marching-cubes mesh of the last checkpoint (ASCII PLY)
    Mesh {
        #[command(flatten)]
        args: EvalArgs,
        /// Keep only cells near observed points
        #[arg(long)]
        mask: bool,
        /// Grid samples along the longest bbox axis
        #[arg(long, default_value_t = 64)]
        res: usize,
        /// Mask voxel size in grid cells
        #[arg(long, default_value_t = 2)]
        voxel_cells: usize,
    },
    /// Axis-aligned SDF slice of the last checkpoint (16-bit PGM plus CSV)
    Slice {
        #[command(flatten)]
        args: EvalArgs,
        /// Slice normal axis: x, y or z
        #[arg(long, default_value = "y")]
        axis: String,
        /// Plane position along the axis, meters [default: bbox center]
        #[arg(long)]
        offset: Option<f64>,
        /// Texels along the longer side
        #[arg(long, default_value_t = 128)]
        res: usize,
        /// |SDF| (meters) mapped to black / white in the PGM
        #[arg(long, default_value_t = 0.5)]
        range: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let diverged = e.chain().any(|c| c.downcast_ref::<cnm_core::Error>().is_some_and(|c| c.is_divergence()));
            ExitCode::from(if diverged { 3 } else { 2 })
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{THREADS_ENV}={v:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { scene, frames, traj, out } => synth(&scene, frames, &traj, &out),
        Command::Train(args) => train(BaselineMode::Replay, &args),
        Command::Baseline { mode, args } => train(mode.parse()?, &args),
        Command::Heatmap { args } => heatmap(&args),
        Command::Forget { args, threshold } => forget(&args, threshold),
        Command::Mesh { args, mask, res, voxel_cells } => mesh(&args, mask, res, voxel_cells),
        Command::Slice { args, axis, offset, res, range } => slice(&args, &axis, offset, res, range),
    }
}

fn synth(scene_path: &Path, n: usize, traj: &str, out: &Path) -> Result<()> {
    let text = fs::read_to_string(scene_path).with_context(|| format!("reading {}", scene_path.display()))?;
    let scene = SyntheticScene::parse(&text).with_context(|| format!("parsing {}", scene_path.display()))?;
    let path: CameraPath = traj.parse()?;
    let bbox = scene.bounds()?;
    let intrinsics = scene.camera.intrinsics()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut manifest = SequenceManifest {
        intrinsics,
        depth_scale: DEFAULT_DEPTH_SCALE,
        bbox,
        entries: Vec::new(),
        base_dir: out.to_path_buf(),
    };
    let mut trajectory = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for (i, pose) in camera_path(path, &bbox, n)?.into_iter().enumerate() {
        let timestamp = i as f64;
        let frame = render_synthetic_depth(&scene, &intrinsics, &pose, i, timestamp)
            .with_context(|| format!("rendering frame {i}"))?;
        let name = format!("depth_{i:04}.png");
        write_depth_png_meters(&out.join(&name), frame.width(), frame.height(), &frame.depth, DEFAULT_DEPTH_SCALE)?;
        trajectory.push_str(&format_trajectory(timestamp, &pose));
        trajectory.push('\n');
        manifest.entries.push(SequenceEntry { depth_path: name.into(), timestamp, pose });
    }
    manifest.save(&out.join(MANIFEST))?;
    fs::write(out.join("groundtruth.txt"), trajectory)?;
    log::info!("wrote {n} frames to {}", out.display());
    Ok(())
}

fn load_manifest(data: &Path) -> Result<SequenceManifest> {
    let path = if data.is_dir() { data.join(MANIFEST) } else { data.to_path_buf() };
    SequenceManifest::load(&path).with_context(|| format!("loading sequence {}", path.display()))
}

fn train(mode: BaselineMode, args: &TrainArgs) -> Result<()> {
    let config = TrainConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    let manifest = load_manifest(&args.data)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    config.save(&args.out.join(CONFIG_COPY))?;
    let mut reports: Vec<LossReport> = Vec::new();
    let mut timing = String::from("t,frame,steps,training_set_size,wall_time_s,cumulative_s\n");
    let mut cumulative = 0.0;
    run_baseline_with(mode, &config, &manifest, |ckpt, report| {
        ckpt.save(&args.out.join(checkpoint_file_name(report.t)))?;
        cumulative += report.wall_time_secs;
        timing.push_str(&format!(
            "{},{},{},{},{:.3},{:.3}\n",
            report.t, report.frame, report.steps, report.training_set_size, report.wall_time_secs, cumulative
        ));
        reports.push(report);
        // rewrite after every frame so partial runs keep their reports
        fs::write(args.out.join("losses.csv"), loss_reports_csv(&reports)).map_err(|e| cnm_core::Error::Io {
            path: args.out.join("losses.csv"),
            source: e,
        })?;
        fs::write(args.out.join("timing.csv"), &timing)
            .map_err(|e| cnm_core::Error::Io { path: args.out.join("timing.csv"), source: e })
    })?;
    log::info!("{} checkpoints in {}", reports.len(), args.out.display());
    Ok(())
}

/// Checkpoints, the frames they correspond to, and the shared normalization.
struct EvalInputs {
    checkpoints: Vec<Checkpoint>,
    config: TrainConfig,
    manifest: SequenceManifest,
    normalization: NormalizationTransform,
    /// Observed surface points of every trained frame.
    frames: Vec<Vec<Vec3>>,
}

fn eval_inputs(args: &EvalArgs) -> Result<EvalInputs> {
    let config_path = args.config.clone().or_else(|| {
        let p = args.ckpts.join(CONFIG_COPY);
        p.exists().then_some(p)
    });
    let config = match &config_path {
        Some(p) => TrainConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => TrainConfig::default(),
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(&args.ckpts)
        .with_context(|| format!("reading {}", args.ckpts.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cnm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no checkpoints in {}", args.ckpts.display());
    }
    let checkpoints = paths
        .iter()
        .map(|p| Checkpoint::load(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    for (c, p) in checkpoints.iter().zip(&paths) {
        if c.params.dims() != &config.dims {
            bail!(
                "{} has layer widths {:?} but the config says {:?}",
                p.display(),
                c.params.dims().as_slice(),
                config.dims.as_slice()
            );
        }
    }
    let manifest = load_manifest(&args.data)?;
    let normalization = match checkpoints[0].normalization {
        Some(n) => n,
        None => NormalizationTransform::fit(&config.bbox.unwrap_or(manifest.bbox))?,
    };
    let indices: Vec<usize> = (0..manifest.len()).step_by(config.frame_stride).collect();
    if indices.len() != checkpoints.len() {
        bail!(
            "{} checkpoints but the sequence has {} frames at stride {}",
            checkpoints.len(),
            indices.len(),
            config.frame_stride
        );
    }
    let frames = indices
        .iter()
        .map(|&i| Ok(backproject(&manifest.load_frame(i)?, config.pixel_stride)?.points))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalInputs { checkpoints, config, manifest, normalization, frames })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn heatmap(args: &EvalArgs) -> Result<()> {
    let inp = eval_inputs(args)?;
    let params: Vec<_> = inp.checkpoints.iter().map(|c| &c.params).collect();
    let h = eval::sdf_error_heatmap(&params, &inp.frames, &inp.normalization);
    log::info!("all frames, last checkpoint: mean |f| {:.5} m", h.final_mean());
    write(&args.out, eval::heatmap_csv(&h))
}

fn forget(args: &EvalArgs, threshold: f64) -> Result<()> {
    if !(threshold > 0.0) {
        bail!("threshold must be positive");
    }
    let inp = eval_inputs(args)?;
    let params: Vec<_> = inp.checkpoints.iter().map(|c| &c.params).collect();
    let curve = eval::forgetting_curve(&params, &inp.frames[0], &inp.normalization, threshold);
    log::info!("frame-0 fraction below {threshold}: {:?}", curve.last());
    write(&args.out, eval::curve_csv(&curve))
}

fn mesh(args: &EvalArgs, mask: bool, res: usize, voxel_cells: usize) -> Result<()> {
    let inp = eval_inputs(args)?;
    let last = inp.checkpoints.last().expect("non-empty");
    let field = NetworkField { params: &last.params, normalization: inp.normalization };
    let bbox = inp.config.bbox.unwrap_or(inp.manifest.bbox);
    let mesh = if mask {
        if voxel_cells == 0 {
            bail!("--voxel-cells must be at least 1");
        }
        let grid = SampleGrid::over(&bbox, res)?;
        let observed: Vec<Vec3> = inp.frames.concat();
        let vmask = eval::occupied_voxel_mask_at(&observed, voxel_cells as f64 * grid.cell, grid.origin)?;
        if vmask.is_empty() {
            log::warn!("no observed points, the masked mesh is empty");
        }
        eval::masked_extract_mesh(&field, &bbox, res, &vmask)?
    } else {
        eval::extract_mesh(&field, &bbox, res)?
    };
    log::info!("{} vertices, {} triangles", mesh.vertices.len(), mesh.triangles.len());
    write(&args.out, eval::mesh_to_ply(&mesh))
}

fn slice(args: &EvalArgs, axis: &str, offset: Option<f64>, res: usize, range: f64) -> Result<()> {
    let axis: SliceAxis = axis.parse()?;
    if !(range > 0.0) {
        bail!("--range must be positive");
    }
    let inp = eval_inputs(args)?;
    let last = inp.checkpoints.last().expect("non-empty");
    let field = NetworkField { params: &last.params, normalization: inp.normalization };
    let bbox = inp.config.bbox.unwrap_or(inp.manifest.bbox);
    let offset = offset.unwrap_or(bbox.center()[axis.index()]);
    let s = eval::export_sdf_slice(&field, &bbox, axis, offset, res)?;
    write(&args.out, eval::slice_to_pgm(&s, range))?;
    let csv = args.out.with_extension("csv");
    if csv == args.out {
        return Err(anyhow!("--out must not end in .csv (the CSV goes next to the PGM)"));
    }
    write(&csv, eval::slice_csv(&s))
}
