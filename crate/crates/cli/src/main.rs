use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use sparself::encodings::{
    encode_epi_stack, extract_epis, focal_stack, focalstack5_disparities, focalstack9_disparities, tile_epis,
    volumetric_stack, EncodedStack, EpiEncoderWeights, DEFAULT_ENCODER_CHANNELS,
};
use sparself::estimator::{estimate_trajectory, EstimatorConfig, WarpMode};
use sparself::eval::{aggregate_rpe, depth_csv, depth_stats, interior_mask, pooled_rmse, rpe, rpe_csv, Trajectory};
use sparself::gradcheck::{run_suite, CheckedObjective, GradCheckConfig};
use sparself::io::{
    encode_png16, encode_stack, encode_weights, format_poses, load_dataset, read_pfm, read_poses, read_weights,
    save_dataset, write_file, Dataset, ViewFormat,
};
use sparself::synth::{render_trajectory, SceneSpec};
use sparself::{plus_pattern, Error, InverseDepthMap, SubApertureLayout};

/// Sparse light-field encodings, direct metric odometry and evaluation.
#[derive(Parser)]
#[command(name = "sparself", version)]
struct Cli {
    /// Seed for every random choice; outputs are a function of it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory receiving all outputs.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,
    /// JSON configuration file (estimator settings for `estimate`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a planar scene along a pose file into a dataset.
    Render(RenderArgs),
    /// Write encoded stacks and preview images for each frame.
    Encode(EncodeArgs),
    /// Estimate frame-to-frame poses and inverse depth.
    Estimate(EstimateArgs),
    /// Relative pose error of estimated against reference poses.
    EvalRpe(EvalRpeArgs),
    /// Depth statistics of estimated inverse depth against ground truth.
    EvalDepth(EvalDepthArgs),
    /// Check analytic objective gradients against finite differences.
    GradCheck(GradCheckArgs),
}

#[derive(Args)]
struct RenderArgs {
    /// Scene description (JSON).
    #[arg(long)]
    scene: PathBuf,
    /// Camera-to-world poses (CSV), one frame per row.
    #[arg(long)]
    poses: PathBuf,
    #[arg(long, value_enum, default_value_t = ImageFormatArg::Png16)]
    format: ImageFormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ImageFormatArg {
    Png16,
    Pfm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Encoding {
    Volumetric,
    #[value(name = "focalstack-5")]
    Focalstack5,
    #[value(name = "focalstack-9")]
    Focalstack9,
    Epi,
}

impl Encoding {
    fn name(self) -> &'static str {
        match self {
            Encoding::Volumetric => "volumetric",
            Encoding::Focalstack5 => "focalstack-5",
            Encoding::Focalstack9 => "focalstack-9",
            Encoding::Epi => "epi",
        }
    }
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    encoding: Encoding,
    /// Only this frame (default: all).
    #[arg(long)]
    frame: Option<usize>,
    /// EPI encoder weights; seeded random weights when absent.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Output channels per EPI branch for random weights.
    #[arg(long, default_value_t = DEFAULT_ENCODER_CHANNELS)]
    channels: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Single,
    Multi,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Overrides the configured warp mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Overrides the initial constant depth, in meters.
    #[arg(long)]
    init_depth: Option<f64>,
}

#[derive(Args)]
struct EvalRpeArgs {
    /// Estimated poses (CSV); repeat for several trajectories.
    #[arg(long, required = true)]
    estimated: Vec<PathBuf>,
    /// Reference poses (CSV), paired with `--estimated` in order.
    #[arg(long, required = true)]
    reference: Vec<PathBuf>,
}

#[derive(Args)]
struct EvalDepthArgs {
    /// Dataset with ground-truth depth; repeat for several.
    #[arg(long, required = true)]
    dataset: Vec<PathBuf>,
    /// `estimate` output directory, paired with `--dataset` in order.
    #[arg(long, required = true)]
    estimate: Vec<PathBuf>,
    /// Border in pixels excluded from the statistics.
    #[arg(long, default_value_t = 8)]
    margin: usize,
}

#[derive(Args)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 5)]
    scenes: usize,
    #[arg(long, default_value_t = 100)]
    pixels: usize,
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
}

/// Errors reported as JSON on stderr.
#[derive(Debug)]
enum CliError {
    Lib(Error),
    Usage(String),
    Config { path: PathBuf, message: String },
    GradCheckFailed(usize),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(_) => 1,
            CliError::Usage(_) | CliError::Config { .. } => 2,
            CliError::GradCheckFailed(_) => 3,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Lib(e) => {
                let mut v = json!({ "error": e.kind(), "message": e.to_string() });
                let path = match e {
                    Error::Manifest { path, .. }
                    | Error::MissingFile(path)
                    | Error::Format { path, .. }
                    | Error::Io { path, .. } => Some(path),
                    Error::DimMismatch { path, frame, .. } => {
                        v["frame"] = json!(frame);
                        Some(path)
                    }
                    _ => None,
                };
                if let Some(p) = path {
                    v["path"] = json!(p.display().to_string());
                }
                if let Error::Pair { prev, cur, .. } = e {
                    v["pair"] = json!([prev, cur]);
                }
                v
            }
            CliError::Usage(m) => json!({ "error": "UsageError", "message": m }),
            CliError::Config { path, message } => {
                json!({ "error": "ConfigError", "message": message, "path": path.display().to_string() })
            }
            CliError::GradCheckFailed(n) => {
                json!({ "error": "GradCheckFailed", "message": format!("{n} gradient components out of tolerance") })
            }
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Files produced by a command, written only after everything succeeded.
#[derive(Default)]
struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, name: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    fn write(self, dir: &Path) -> CliResult<()> {
        for (name, bytes) in self.files {
            write_file(&dir.join(name), &bytes)?;
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Render(a) => render(&cli, a),
        Command::Encode(a) => encode(&cli, a),
        Command::Estimate(a) => estimate(&cli, a),
        Command::EvalRpe(a) => eval_rpe(&cli, a),
        Command::EvalDepth(a) => eval_depth(&cli, a),
        Command::GradCheck(a) => grad_check(&cli, a),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Lib(Error::MissingFile(path.to_path_buf())),
        _ => CliError::Lib(Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn json_bytes(value: &impl Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn render(cli: &Cli, a: &RenderArgs) -> CliResult<()> {
    let mut spec: SceneSpec = read_json(&a.scene)?;
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    let poses = read_poses(&a.poses)?;
    let camera = spec.camera.build()?;
    let scene = spec.build(&camera)?;
    let seq = render_trajectory(&scene, &camera, poses.poses())?;
    let dataset = Dataset {
        intrinsics: camera.intrinsics,
        timestamps: poses.timestamps().to_vec(),
        gt_inverse_depths: Some(seq.frames.iter().map(|f| f.central_inverse_depth().clone()).collect()),
        frames: seq.lightfields(),
        gt_poses: Some(poses.poses().to_vec()),
    };
    let format = match a.format {
        ImageFormatArg::Png16 => ViewFormat::Png16,
        ImageFormatArg::Pfm => ViewFormat::Pfm,
    };
    dataset.validate(format)?;
    let manifest = save_dataset(&cli.output_dir, &dataset, format)?;
    write_file(&cli.output_dir.join("gt_poses.csv"), format_poses(&poses).as_bytes())?;
    println!(
        "{}",
        json!({ "frames": manifest.frames.len(), "views_per_frame": manifest.frames[0].views.len() })
    );
    Ok(())
}

fn stack_preview(stack: &EncodedStack, k: usize, normalize: bool) -> CliResult<Vec<u8>> {
    let mut img = stack.channel_image(k)?;
    if normalize {
        let (lo, hi) = img.min_max();
        let span = if hi > lo { hi - lo } else { 1.0 };
        let data = img.data().iter().map(|v| (v - lo) / span).collect();
        img = sparself::Image::new(img.width(), img.height(), 1, data)?;
    } else {
        let data = img.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
        img = sparself::Image::new(img.width(), img.height(), 1, data)?;
    }
    Ok(encode_png16(&img)?)
}

fn encode(cli: &Cli, a: &EncodeArgs) -> CliResult<()> {
    let (_, dataset) = load_dataset(&a.dataset)?;
    let frames: Vec<usize> = match a.frame {
        Some(f) if f >= dataset.frames.len() => {
            return Err(CliError::Usage(format!(
                "frame {f} out of range, dataset has {}",
                dataset.frames.len()
            )))
        }
        Some(f) => vec![f],
        None => (0..dataset.frames.len()).collect(),
    };
    let first = &dataset.frames[0];
    let weights = match (a.encoding, &a.weights) {
        (Encoding::Epi, Some(p)) => Some(read_weights(p)?),
        (Encoding::Epi, None) => Some(EpiEncoderWeights::seeded_random(
            first.views_per_arm(),
            first.channels(),
            a.channels,
            cli.seed.unwrap_or(0),
        )?),
        _ => None,
    };
    let mut out = Outputs::default();
    let name = a.encoding.name();
    for &i in &frames {
        let lf = &dataset.frames[i];
        let stack = match a.encoding {
            Encoding::Volumetric => volumetric_stack(lf, &plus_pattern(lf.arm_length()))?,
            Encoding::Focalstack5 => focal_stack(lf, &focalstack5_disparities())?,
            Encoding::Focalstack9 => focal_stack(lf, &focalstack9_disparities())?,
            Encoding::Epi => {
                let w = weights.as_ref().expect("weights chosen for epi");
                let (tall, wide) = tile_epis(&extract_epis(lf)?)?;
                out.add(format!("frame_{i:04}.epi_tall.png"), encode_png16(&tall)?);
                out.add(format!("frame_{i:04}.epi_wide.png"), encode_png16(&wide)?);
                encode_epi_stack(lf, w)?
            }
        };
        for k in 0..stack.channels() {
            let preview = stack_preview(&stack, k, a.encoding == Encoding::Epi)?;
            out.add(format!("frame_{i:04}.{name}.ch{k:02}.png"), preview);
        }
        out.add(format!("frame_{i:04}.{name}.stack"), encode_stack(&stack));
    }
    if let (Some(w), None) = (&weights, &a.weights) {
        out.add("epi_weights.bin", encode_weights(w));
    }
    let count = out.files.len();
    out.write(&cli.output_dir)?;
    println!("{}", json!({ "encoding": name, "frames": frames.len(), "files": count }));
    Ok(())
}

fn estimator_config(cli: &Cli, a: &EstimateArgs) -> CliResult<EstimatorConfig> {
    let mut config = match &cli.config {
        Some(p) => read_json::<EstimatorConfig>(p)?,
        None => EstimatorConfig::default(),
    };
    match a.mode {
        Some(ModeArg::Single) => config.mode = WarpMode::SingleWarp,
        Some(ModeArg::Multi) => config.mode = WarpMode::MultiWarp,
        None => {}
    }
    if let Some(d) = a.init_depth {
        if !(d > 0.0 && d.is_finite()) {
            return Err(CliError::Usage(format!("--init-depth must be positive, got {d}")));
        }
        config.init_inverse_depth = 1.0 / d;
    }
    config.validate()?;
    Ok(config)
}

#[derive(Serialize)]
struct PairSummary {
    prev: usize,
    cur: usize,
    final_loss: f64,
    photometric_loss: f64,
    converged: bool,
}

fn estimate(cli: &Cli, a: &EstimateArgs) -> CliResult<()> {
    let config = estimator_config(cli, a)?;
    let (_, dataset) = load_dataset(&a.dataset)?;
    let first = &dataset.frames[0];
    let layout = SubApertureLayout::plus(first.arm_length(), first.baseline())?;
    let est = estimate_trajectory(&dataset.frames, &dataset.intrinsics, &layout, &config)?;
    let trajectory = Trajectory::new(dataset.timestamps.clone(), est.poses.clone())?;

    let mut out = Outputs::default();
    out.add("poses.csv", format_poses(&trajectory));
    let mut traces = String::from("pair,iteration,loss\n");
    let mut summary = Vec::with_capacity(est.pairs.len());
    for (p, r) in est.pairs.iter().enumerate() {
        let cur = p + 1;
        let d = &r.inverse_depth;
        out.add(
            format!("inverse_depth_{cur:04}.pfm"),
            sparself::io::encode_pfm(d.width(), d.height(), 1, d.data())?,
        );
        for (it, v) in r.loss_trace.iter().enumerate() {
            traces.push_str(&format!("{p},{it},{v}\n"));
        }
        summary.push(PairSummary {
            prev: p,
            cur,
            final_loss: r.final_loss,
            photometric_loss: r.photometric_loss,
            converged: r.converged,
        });
    }
    out.add("loss_traces.csv", traces);
    out.add("estimate_summary.json", json_bytes(&json!({ "config": config, "pairs": summary })));
    out.write(&cli.output_dir)?;
    println!("{}", json!({ "pairs": est.pairs.len(), "converged": summary.iter().filter(|s| s.converged).count() }));
    Ok(())
}

fn eval_rpe(cli: &Cli, a: &EvalRpeArgs) -> CliResult<()> {
    if a.estimated.len() != a.reference.len() {
        return Err(CliError::Usage(format!(
            "{} --estimated files but {} --reference files",
            a.estimated.len(),
            a.reference.len()
        )));
    }
    let mut reports = Vec::with_capacity(a.estimated.len());
    for (e, r) in a.estimated.iter().zip(&a.reference) {
        reports.push(rpe(&read_poses(e)?, &read_poses(r)?)?);
    }
    let mut out = Outputs::default();
    if reports.len() == 1 {
        out.add("rpe.csv", rpe_csv(&reports[0]));
    } else {
        for (k, r) in reports.iter().enumerate() {
            out.add(format!("rpe_{k}.csv"), rpe_csv(r));
        }
    }
    let per_trajectory: Vec<_> = reports
        .iter()
        .zip(&a.estimated)
        .map(|(r, e)| json!({ "estimated": e.display().to_string(), "translation_m": r.translation, "rotation_deg": r.rotation }))
        .collect();
    let summary = json!({ "trajectories": per_trajectory, "aggregate": aggregate_rpe(&reports) });
    out.add("rpe_summary.json", json_bytes(&summary));
    out.write(&cli.output_dir)?;
    println!("{summary}");
    Ok(())
}

fn eval_depth(cli: &Cli, a: &EvalDepthArgs) -> CliResult<()> {
    if a.dataset.len() != a.estimate.len() {
        return Err(CliError::Usage(format!(
            "{} --dataset directories but {} --estimate directories",
            a.dataset.len(),
            a.estimate.len()
        )));
    }
    let mut rows = Vec::new();
    for (ds, est_dir) in a.dataset.iter().zip(&a.estimate) {
        let (_, dataset) = load_dataset(ds)?;
        let gt = dataset.gt_inverse_depths.as_ref().ok_or_else(|| Error::Manifest {
            path: ds.clone(),
            message: "dataset carries no ground-truth depth".into(),
        })?;
        let mut found = 0;
        for (i, reference) in gt.iter().enumerate() {
            let path = est_dir.join(format!("inverse_depth_{i:04}.pfm"));
            if !path.exists() {
                continue;
            }
            found += 1;
            let (w, h, c, data) = read_pfm(&path)?;
            if (w, h, c) != (reference.width(), reference.height(), 1) {
                return Err(Error::DimMismatch {
                    path,
                    frame: i,
                    message: format!("estimate is {w}x{h}x{c}, ground truth {}x{}x1", reference.width(), reference.height()),
                }
                .into());
            }
            let map = InverseDepthMap::new(w, h, data).map_err(|e| Error::Format {
                path: path.clone(),
                message: e.to_string(),
            })?;
            rows.push(depth_stats(&map, reference, &interior_mask(w, h, a.margin))?);
        }
        if found == 0 {
            return Err(Error::MissingFile(est_dir.join("inverse_depth_0001.pfm")).into());
        }
    }
    let overall = pooled_rmse(&rows);
    let mut out = Outputs::default();
    out.add("depth.csv", depth_csv(&rows, overall));
    out.write(&cli.output_dir)?;
    println!("{}", json!({ "rows": rows.len(), "overall_rmse_m": overall }));
    Ok(())
}

fn grad_check(cli: &Cli, a: &GradCheckArgs) -> CliResult<()> {
    let config = GradCheckConfig {
        scenes: a.scenes,
        depth_pixels: a.pixels,
        tolerance: a.tolerance,
        seed: cli.seed.unwrap_or(0),
    };
    let mut failures = 0;
    for objective in CheckedObjective::ALL {
        for report in run_suite(&config, objective)? {
            let failed = report.checks.iter().filter(|c| !c.passed).count();
            failures += failed;
            println!(
                "{}",
                json!({
                    "objective": objective.name(),
                    "scene": report.scene,
                    "components": report.checks.len(),
                    "failed": failed,
                    "max_relative_error": report.max_relative_error(),
                })
            );
        }
    }
    if failures > 0 {
        return Err(CliError::GradCheckFailed(failures));
    }
    Ok(())
}
