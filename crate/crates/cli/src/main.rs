use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use gmmap::eval::{
    grid_points, memory_report, pr_curve, roc_curve, sample_eval_points, write_memory_csv,
    write_pr_csv, write_roc_csv,
};
use gmmap::io::config::Config;
use gmmap::io::mapfile::{load_map, save_map};
use gmmap::io::ply::{export_ply, KindFilter};
use gmmap::io::synthetic::SyntheticScene;
use gmmap::io::tum::load_tum_sequence;
use gmmap::pipeline::write_timing_csv;
use gmmap::{
    classify, query_batch, Aabb, CameraIntrinsics, DepthImage, GmmapError, GmmapParams,
    MapBuilder, Pose, Vec3,
};

/// Name of the configuration file `synth` writes next to a sequence.
const SEQUENCE_CONFIG: &str = "gmmap.cfg";

#[derive(Parser)]
#[command(name = "gmmap", version, about = "Gaussian mixture occupancy maps from depth images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a map from a depth sequence or a synthetic scene.
    Build(BuildArgs),
    /// Query occupancy at a point or over a grid.
    Query(QueryArgs),
    /// ROC and precision-recall of a map against a sequence.
    Eval(EvalArgs),
    /// Export Gaussians as PLY ellipsoids.
    Export(ExportArgs),
    /// Render a synthetic scene to a TUM-layout sequence.
    Synth(SynthArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// TUM RGB-D sequence directory.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Synthetic scene file, rendered on the fly.
    #[arg(long)]
    synth: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    source: Source,
    /// key = value configuration; defaults to gmmap.cfg in the input directory.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Use at most this many frames.
    #[arg(long)]
    limit: Option<usize>,
    /// Per-frame timing CSV; defaults to timing.csv next to the map.
    #[arg(long)]
    timing: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    map: PathBuf,
    /// x,y,z
    #[arg(long, conflicts_with = "grid", required_unless_present = "grid", allow_hyphen_values = true)]
    point: Option<String>,
    /// xmin,ymin,zmin,xmax,ymax,zmax,step
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.9)]
    occ_threshold: f64,
    #[arg(long, default_value_t = 0.1)]
    free_threshold: f64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    map: PathBuf,
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for roc.csv, pr.csv and memory.csv.
    #[arg(long)]
    out: PathBuf,
    /// Free-sample spacing along each ray (m).
    #[arg(long, default_value_t = 0.1)]
    spacing: f64,
    /// Evaluate every n-th pixel in both directions.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    ply: PathBuf,
    /// occ, free or all
    #[arg(long, default_value = "all")]
    kind: KindFilter,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    scene: Option<PathBuf>,
    /// Built-in scene: box-room.
    #[arg(long)]
    preset: Option<String>,
    /// Image size of the preset camera.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Frames of the preset trajectory.
    #[arg(long, default_value_t = 40)]
    frames: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Bad command-line values; exits with status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<GmmapError>() {
        Some(GmmapError::Config { .. } | GmmapError::UnknownConfigKey { .. }) => 2,
        _ => 1,
    }
}

fn parse_numbers(text: &str, n: usize, what: &str) -> anyhow::Result<Vec<f64>> {
    let nums: Vec<f64> = text
        .split(',')
        .map(|w| w.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("malformed {what} {text:?}")))?;
    if nums.len() != n || !nums.iter().all(|v| v.is_finite()) {
        return Err(usage(format!("{what} needs {n} comma-separated numbers, got {text:?}")));
    }
    Ok(nums)
}

/// Frames from either source, decoded lazily.
enum Frames {
    Tum(gmmap::io::tum::FrameStream),
    Synth(SyntheticScene),
}

impl Frames {
    fn len(&self) -> usize {
        match self {
            Frames::Tum(s) => s.len(),
            Frames::Synth(s) => s.trajectory.len(),
        }
    }

    fn get(&self, k: usize) -> gmmap::Result<(DepthImage, Pose)> {
        match self {
            Frames::Tum(s) => Ok((s.load_depth(k)?, s.frames[k].pose)),
            Frames::Synth(s) => {
                let pose = s.trajectory[k];
                Ok((s.render(&pose), pose))
            }
        }
    }
}

/// Resolves the camera, map parameters and frame source.
fn open_source(
    source: &Source,
    config: Option<&Path>,
) -> anyhow::Result<(CameraIntrinsics, GmmapParams, Frames)> {
    let default_cfg = source
        .input
        .as_ref()
        .map(|d| d.join(SEQUENCE_CONFIG))
        .filter(|p| p.is_file());
    let cfg = match config.map(Path::to_path_buf).or(default_cfg) {
        Some(path) => {
            Config::load(&path).with_context(|| format!("config {}", path.display()))?
        }
        None => Config::default(),
    };
    if let Some(dir) = &source.input {
        let stream = load_tum_sequence(dir, &cfg.camera)
            .with_context(|| format!("sequence {}", dir.display()))?;
        if stream.dropped_frames > 0 {
            warn!("{} depth frames had no pose within 20 ms", stream.dropped_frames);
        }
        Ok((cfg.camera, cfg.effective_params(), Frames::Tum(stream)))
    } else {
        let path = source.synth.as_ref().expect("clap requires one source");
        let scene =
            SyntheticScene::load(path).with_context(|| format!("scene {}", path.display()))?;
        let params = if cfg.scale_to_image {
            cfg.params.scaled_for_pixels(scene.camera.pixels())
        } else {
            cfg.params.clone()
        };
        Ok((scene.camera, params, Frames::Synth(scene)))
    }
}

fn cmd_build(args: BuildArgs) -> anyhow::Result<()> {
    if args.threads == 0 {
        bail!(usage("--threads must be at least 1"));
    }
    let (cam, params, frames) = open_source(&args.source, args.config.as_deref())?;
    let n = args.limit.map_or(frames.len(), |l| l.min(frames.len()));
    let mut builder = MapBuilder::new(cam, params)?.with_threads(args.threads)?;
    let start = Instant::now();
    for k in 0..n {
        let (image, pose) = frames.get(k).with_context(|| format!("frame {k}"))?;
        let r = builder.integrate(&image, &pose)?;
        let ms = r.local_ms + r.fusion_ms;
        println!(
            "frame {k}: {ms:.1} ms ({:.1} images/s), {} local, {} in map",
            1e3 / ms.max(1e-9),
            r.local_gaussians,
            r.map_gaussians
        );
    }
    let secs = start.elapsed().as_secs_f64();
    save_map(builder.map(), &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    let timing = args.timing.unwrap_or_else(|| args.out.with_file_name("timing.csv"));
    write_timing_csv(&timing, builder.reports())?;
    let report = builder.memory_report();
    println!(
        "{n} frames in {secs:.2} s ({:.1} images/s); {} Gaussians, {} bytes, peak overhead {} bytes",
        if secs > 0.0 { n as f64 / secs } else { 0.0 },
        builder.map().len(),
        report.map_bytes,
        report.peak_overhead_bytes
    );
    Ok(())
}

fn cmd_query(args: QueryArgs) -> anyhow::Result<()> {
    let points = match (&args.point, &args.grid) {
        (Some(p), _) => {
            let v = parse_numbers(p, 3, "point")?;
            vec![Vec3::new(v[0], v[1], v[2])]
        }
        (None, Some(g)) => {
            let v = parse_numbers(g, 7, "grid")?;
            let bounds = Aabb::new(Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]));
            if !(v[6] > 0.0) || (0..3).any(|k| bounds.min[k] > bounds.max[k]) {
                return Err(usage("grid needs min <= max and a positive step"));
            }
            grid_points(&bounds, v[6])
        }
        (None, None) => return Err(usage("give --point or --grid")),
    };
    let map = load_map(&args.map).with_context(|| format!("map {}", args.map.display()))?;
    let results = query_batch(&map, &points);
    let mut csv = String::from("x,y,z,m,v,class\n");
    for (x, (m, v)) in points.iter().zip(&results) {
        let class = classify(*m, args.occ_threshold, args.free_threshold);
        let _ = writeln!(csv, "{},{},{},{m},{v},{class}", x.x, x.y, x.z);
    }
    match &args.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<()> {
    let map = load_map(&args.map).with_context(|| format!("map {}", args.map.display()))?;
    let (cam, _, frames) = open_source(&args.source, args.config.as_deref())?;
    if !(args.spacing > 0.0) {
        return Err(usage("--spacing must be positive"));
    }
    let n = args.limit.map_or(frames.len(), |l| l.min(frames.len()));
    let mut scores = Vec::new();
    let mut skipped = 0;
    for k in 0..n {
        let (image, pose) = match frames.get(k) {
            Ok(f) => f,
            Err(e) => {
                warn!("skipping frame {k}: {e}");
                skipped += 1;
                continue;
            }
        };
        if (image.width(), image.height()) != (cam.width, cam.height) {
            warn!("skipping frame {k}: image size differs from the camera");
            skipped += 1;
            continue;
        }
        let samples = sample_eval_points(&image, &pose, &cam, args.spacing, args.stride);
        let points: Vec<Vec3> = samples.iter().map(|s| s.point).collect();
        let results = query_batch(&map, &points);
        scores.extend(samples.iter().zip(results).map(|(s, (m, _))| (m, s.occupied)));
    }
    if skipped > 0 {
        warn!("evaluated {} of {n} frames", n - skipped);
    }
    if scores.is_empty() {
        bail!("no evaluation samples");
    }
    std::fs::create_dir_all(&args.out)?;
    let roc = roc_curve(&scores);
    write_roc_csv(&args.out.join("roc.csv"), &roc)?;
    write_pr_csv(&args.out.join("pr.csv"), &pr_curve(&scores))?;
    write_memory_csv(&args.out.join("memory.csv"), &memory_report(&map, 0))?;
    info!("{} samples", scores.len());
    println!("AUC {:.6}", roc.auc);
    Ok(())
}

fn cmd_export(args: ExportArgs) -> anyhow::Result<()> {
    let map = load_map(&args.map).with_context(|| format!("map {}", args.map.display()))?;
    export_ply(&map, &args.ply, args.kind)?;
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<()> {
    let scene = match (&args.scene, args.preset.as_deref()) {
        (Some(path), _) => {
            SyntheticScene::load(path).with_context(|| format!("scene {}", path.display()))?
        }
        (None, Some("box-room")) => {
            if args.size == 0 || args.frames == 0 {
                return Err(usage("--size and --frames must be positive"));
            }
            SyntheticScene::box_room(args.size, args.frames)
        }
        (None, Some(other)) => return Err(usage(format!("unknown preset {other:?}"))),
        (None, None) => return Err(usage("give --scene or --preset")),
    };
    if scene.trajectory.is_empty() {
        return Err(anyhow!("scene has no poses"));
    }
    scene.write_sequence(&args.out)?;
    let cfg = Config {
        camera: scene.camera,
        params: GmmapParams::default(),
        scale_to_image: true,
    };
    std::fs::write(args.out.join(SEQUENCE_CONFIG), cfg.to_text())?;
    println!("{} frames written to {}", scene.trajectory.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GMMAP_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(a) => cmd_build(a),
        Command::Query(a) => cmd_query(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Export(a) => cmd_export(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
