//! Command-line front end. `run` returns the process exit code:
//! 0 success, 1 usage error, 2 data error, 3 estimation failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::Error;
use crate::eval::{error_histogram, evaluate_icp, evaluate_pairs, EvalOptions, EvalReport};
use crate::geom::RigidTransformSim3;
use crate::io::{check_file, load_sequence, read_pairs, Dataset, FrameBundle, Sim3Record};
use crate::pipeline::{estimate_icp, estimate_pose, reference_cloud, IcpBaselineConfig, IcpInit, PipelineConfig};
use crate::solver::{IcpConfig, PointCloud};
use crate::synth::{gen_benchmark, write_dataset, NoiseProfile};
use crate::viewsel::ViewSelectConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_ESTIMATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "zspose", version, about = "Zero-shot relative pose estimation between object instances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the pose of one reference frame against a target sequence.
    Estimate(EstimateArgs),
    /// Run the pipeline over a pair list and report metrics.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic benchmark on disk.
    Synth(SynthArgs),
    /// ICP baseline, on one pair or over a pair list.
    Icp(IcpArgs),
    /// Validate feature, depth and manifest files.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// `.zpf`, `.zdf` or manifest `.json` files.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct PipelineFlags {
    /// Number of correspondences.
    #[arg(long)]
    k: Option<usize>,
    /// cyclical | mutual-nn | sinkhorn | dual-softmax
    #[arg(long)]
    matcher: Option<String>,
    /// correspond-sim | global-sim | saliency-iou | cyclical-dist-iou
    #[arg(long = "view-select")]
    view_select: Option<String>,
    #[arg(long)]
    ransac_iters: Option<usize>,
    #[arg(long)]
    inlier_thresh: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip RANSAC and return identity at the best view.
    #[arg(long)]
    best_view_only: bool,
    #[arg(long)]
    min_inlier_fraction: Option<f64>,
    /// JSON file of flag defaults; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FrameSelection {
    /// Reference frame as `<manifest>#<frame_id>`.
    #[arg(long = "ref", required = true)]
    reference: String,
    /// Target sequence manifest.
    #[arg(long, required = true)]
    target: PathBuf,
    /// Comma-separated target frame ids (default: all, in manifest order).
    #[arg(long, value_delimiter = ',')]
    frames: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    select: FrameSelection,
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Write the pose JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalData {
    /// Pair list (JSON lines).
    #[arg(long, required = true)]
    pairs: PathBuf,
    /// Dataset root.
    #[arg(long, required = true)]
    data: PathBuf,
    /// Use only the first N target frames of each pair.
    #[arg(long)]
    views: Option<usize>,
    /// Pool all pairs for the aggregate instead of averaging categories.
    #[arg(long)]
    micro: bool,
    #[arg(long)]
    per_pair_csv: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, env = "ZSPOSE_JOBS")]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: EvalData,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, required = true)]
    out: PathBuf,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    categories: u64,
    /// Pairs per category.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pairs: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    views: u64,
    #[arg(long, default_value_t = 0.1)]
    noise_feat: f64,
    #[arg(long, default_value_t = 0.05)]
    noise_shape: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_depth: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct IcpArgs {
    #[arg(long = "ref")]
    reference: Option<String>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    frames: Option<Vec<String>>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    per_pair_csv: Option<PathBuf>,
    #[arg(long, env = "ZSPOSE_JOBS")]
    jobs: Option<usize>,
    /// identity | best-view
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Keys accepted in a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    k: Option<usize>,
    matcher: Option<String>,
    view_select: Option<String>,
    ransac_iters: Option<usize>,
    inlier_thresh: Option<f64>,
    seed: Option<u64>,
    best_view_only: Option<bool>,
    min_inlier_fraction: Option<f64>,
    sinkhorn_epsilon: Option<f64>,
    sinkhorn_iters: Option<usize>,
    softmax_temperature: Option<f64>,
    tau: Option<f64>,
    init: Option<String>,
    subsample: Option<usize>,
    max_iter: Option<usize>,
    tol: Option<f64>,
}

/// Error annotated with its exit code.
struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) => EXIT_USAGE,
            Error::AllViewsUnusable
            | Error::NoConsensus
            | Error::DegenerateConfiguration(_)
            | Error::TooFewPairs { .. }
            | Error::NumericalUnderflow
            | Error::EmptyForeground => EXIT_ESTIMATION,
            _ => EXIT_DATA,
        };
        Failure(code, e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure(EXIT_USAGE, msg.into())
}

type CliResult<T> = std::result::Result<T, Failure>;

fn load_config(path: Option<&Path>) -> CliResult<ConfigFile> {
    let Some(path) = path else { return Ok(ConfigFile::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("bad config {}: {e}", path.display())))
}

fn parse<T: std::str::FromStr<Err = Error>>(value: Option<&String>) -> CliResult<Option<T>> {
    value.map(|v| v.parse::<T>().map_err(Failure::from)).transpose()
}

fn pipeline_config(flags: &PipelineFlags) -> CliResult<(PipelineConfig, Value)> {
    let file = load_config(flags.config.as_deref())?;
    let mut cfg = PipelineConfig::default();
    cfg.k = flags.k.or(file.k).unwrap_or(cfg.k);
    if let Some(m) = parse(flags.matcher.as_ref().or(file.matcher.as_ref()))? {
        cfg.matcher = m;
    }
    if let Some(v) = parse(flags.view_select.as_ref().or(file.view_select.as_ref()))? {
        cfg.view_strategy = v;
    }
    cfg.ransac.max_iters = flags.ransac_iters.or(file.ransac_iters).unwrap_or(cfg.ransac.max_iters);
    cfg.ransac.inlier_thresh = flags.inlier_thresh.or(file.inlier_thresh).unwrap_or(cfg.ransac.inlier_thresh);
    cfg.ransac.seed = flags.seed.or(file.seed).unwrap_or(cfg.ransac.seed);
    cfg.best_view_only = flags.best_view_only || file.best_view_only.unwrap_or(false);
    cfg.min_inlier_fraction = flags.min_inlier_fraction.or(file.min_inlier_fraction).unwrap_or(cfg.min_inlier_fraction);
    cfg.sinkhorn_epsilon = file.sinkhorn_epsilon.unwrap_or(cfg.sinkhorn_epsilon);
    cfg.sinkhorn_iters = file.sinkhorn_iters.unwrap_or(cfg.sinkhorn_iters);
    cfg.softmax_temperature = file.softmax_temperature.unwrap_or(cfg.softmax_temperature);
    cfg.tau = file.tau.unwrap_or(cfg.tau);
    cfg.validate()?;
    let echo = json!({
        "k": cfg.k,
        "matcher": cfg.matcher.name(),
        "view_select": cfg.view_strategy.name(),
        "ransac_iters": cfg.ransac.max_iters,
        "inlier_thresh": cfg.ransac.inlier_thresh,
        "sample_size": cfg.ransac.sample_size,
        "seed": cfg.ransac.seed,
        "best_view_only": cfg.best_view_only,
        "min_inlier_fraction": cfg.min_inlier_fraction,
    });
    Ok((cfg, echo))
}

fn icp_config(args: &IcpArgs) -> CliResult<IcpBaselineConfig> {
    let file = load_config(args.config.as_deref())?;
    let mut cfg = IcpBaselineConfig::default();
    if let Some(init) = parse::<IcpInit>(args.init.as_ref().or(file.init.as_ref()))? {
        cfg.init = init;
    }
    let d = IcpConfig::default();
    cfg.icp = IcpConfig {
        max_iter: args.max_iter.or(file.max_iter).unwrap_or(d.max_iter),
        tol: args.tol.or(file.tol).unwrap_or(d.tol),
        subsample: args.subsample.or(file.subsample).unwrap_or(d.subsample),
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
        cell: file.inlier_thresh.unwrap_or(d.cell),
    };
    cfg.view = ViewSelectConfig { k: args.k.or(file.k).unwrap_or(50), seed: cfg.icp.seed, ..ViewSelectConfig::default() };
    if !(cfg.icp.tol >= 0.0) || cfg.icp.subsample < 3 {
        return Err(usage("ICP needs tol >= 0 and subsample >= 3"));
    }
    Ok(cfg)
}

fn load_frames(select_ref: &str, target: &Path, frames: Option<&[String]>) -> CliResult<(FrameBundle, Vec<FrameBundle>)> {
    let (manifest, frame) =
        select_ref.rsplit_once('#').ok_or_else(|| usage(format!("--ref must be <manifest>#<frame_id>, got {select_ref:?}")))?;
    let reference = load_sequence(Path::new(manifest))?.frame(frame)?;
    let seq = load_sequence(target)?;
    let ids: Vec<String> = match frames {
        Some(f) => f.to_vec(),
        None => seq.frame_ids().map(str::to_string).collect(),
    };
    if ids.is_empty() {
        return Err(Failure(EXIT_DATA, "target sequence has no frames".into()));
    }
    let targets = ids.iter().map(|id| seq.frame(id)).collect::<Result<Vec<_>, _>>()?;
    Ok((reference, targets))
}

fn transform_json(t: &RigidTransformSim3) -> Value {
    serde_json::to_value(Sim3Record::from_sim3(t)).expect("plain numbers")
}

fn emit(payload: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, payload).map_err(|e| Failure(EXIT_DATA, format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(payload.as_bytes()).and_then(|_| stdout.flush()).map_err(|e| Failure(EXIT_DATA, e.to_string()))
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// RMS distance of a cloud from its centroid.
fn spread(cloud: &PointCloud) -> f64 {
    if cloud.is_empty() {
        return f64::NAN;
    }
    let n = cloud.len() as f64;
    let mu = cloud.points.iter().sum::<crate::geom::Vec3>() / n;
    (cloud.points.iter().map(|p| (p - mu).norm_squared()).sum::<f64>() / n).sqrt()
}

fn warn_scale(reference: &FrameBundle, thresh: f64) {
    let s = spread(&reference_cloud(reference, 4));
    if s.is_finite() && (s > 3.0 || s < 1.0 / 3.0) {
        eprintln!("warning: reference cloud spread {s:.3} is far from unit scale; inlier threshold {thresh} may be unsuitable");
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    match jobs {
        Some(0) => Err(usage("--jobs must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| usage(e.to_string()))?
            .install(f),
        None => f(),
    }
}

fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    let (cfg, _) = pipeline_config(&args.pipeline)?;
    let (reference, targets) = load_frames(&args.select.reference, &args.select.target, args.select.frames.as_deref())?;
    warn_scale(&reference, cfg.ransac.inlier_thresh);
    let r = estimate_pose(&reference, &targets, &cfg)?;
    let payload = json!({
        "transform": transform_json(&r.estimate.transform),
        "best_view": r.best_view_index,
        "inliers": r.estimate.inlier_count,
        "rms": r.estimate.rms_residual,
        "fallback": r.fallback.name(),
    });
    emit(&pretty(&payload), args.out.as_deref())
}

fn open_eval(data: &EvalData) -> CliResult<(Vec<crate::io::PairSpec>, Dataset)> {
    let pairs = read_pairs(&data.pairs)?;
    if pairs.is_empty() {
        return Err(Failure(EXIT_DATA, format!("{} contains no pairs", data.pairs.display())));
    }
    if data.views == Some(0) {
        return Err(usage("--views must be at least 1"));
    }
    Ok((pairs, Dataset::open(&data.data)?))
}

fn write_report(report: &EvalReport, config: Value, out: Option<&Path>, csv: Option<&Path>) -> CliResult<()> {
    let mut payload = serde_json::to_value(report).expect("serializable");
    payload["config"] = config;
    if let Some(path) = csv {
        std::fs::write(path, error_histogram(&report.records)).map_err(|e| Failure(EXIT_DATA, format!("{}: {e}", path.display())))?;
    }
    for (id, why) in &report.skip_reasons {
        eprintln!("skipped {id}: {why}");
    }
    emit(&pretty(&payload), out)
}

fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let (cfg, echo) = pipeline_config(&args.pipeline)?;
    let d = &args.data;
    let (pairs, dataset) = open_eval(d)?;
    let opts = EvalOptions { views: d.views, micro: d.micro };
    let report = with_jobs(d.jobs, || Ok(evaluate_pairs(&pairs, &dataset, &cfg, &opts)?))?;
    write_report(&report, echo, d.out.as_deref(), d.per_pair_csv.as_deref())
}

fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let noise = NoiseProfile { feat: args.noise_feat, shape: args.noise_shape, depth: args.noise_depth };
    if ![noise.feat, noise.shape, noise.depth].iter().all(|v| *v >= 0.0 && v.is_finite()) {
        return Err(usage("noise levels must be non-negative"));
    }
    let data = gen_benchmark(args.categories as usize, args.pairs as usize, args.views as usize, noise, args.seed)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Failure(EXIT_DATA, format!("{}: {e}", args.out.display())))?;
    write_dataset(&data, &args.out)?;
    println!(
        "wrote {} categories, {} pairs, {} frames to {}",
        args.categories,
        data.pairs.len(),
        data.frame_count(),
        args.out.display()
    );
    Ok(())
}

fn cmd_icp(args: &IcpArgs) -> CliResult<()> {
    let cfg = icp_config(args)?;
    let init_name = match cfg.init {
        IcpInit::Identity => "identity",
        IcpInit::BestView => "best-view",
    };
    if let (Some(pairs), Some(data)) = (&args.pairs, &args.data) {
        let d = EvalData {
            pairs: pairs.clone(),
            data: data.clone(),
            views: args.views,
            micro: false,
            per_pair_csv: args.per_pair_csv.clone(),
            jobs: args.jobs,
            out: args.out.clone(),
        };
        let (pairs, dataset) = open_eval(&d)?;
        let opts = EvalOptions { views: d.views, micro: false };
        let report = with_jobs(d.jobs, || Ok(evaluate_icp(&pairs, &dataset, &cfg, &opts)?))?;
        let echo = json!({
            "init": init_name,
            "subsample": cfg.icp.subsample,
            "max_iter": cfg.icp.max_iter,
            "tol": cfg.icp.tol,
            "seed": cfg.icp.seed,
        });
        return write_report(&report, echo, d.out.as_deref(), d.per_pair_csv.as_deref());
    }
    let (Some(reference), Some(target)) = (&args.reference, &args.target) else {
        return Err(usage("icp needs either --ref and --target, or --pairs and --data"));
    };
    let (reference, targets) = load_frames(reference, target, args.frames.as_deref())?;
    let r = estimate_icp(&reference, &targets, &cfg)?;
    let payload = json!({
        "transform": transform_json(&r.icp.estimate.transform),
        "best_view": r.anchor_view,
        "init": init_name,
        "iterations": r.icp.iterations,
        "rms": r.icp.estimate.rms_residual,
    });
    emit(&pretty(&payload), args.out.as_deref())
}

fn cmd_check(args: &CheckArgs) -> CliResult<()> {
    let mut failed = 0usize;
    for path in &args.paths {
        match check_file(path) {
            Ok(found) => println!("ok {}: {found}", path.display()),
            Err(e) => {
                println!("bad {}: {e}", path.display());
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(Failure(EXIT_DATA, format!("{failed} of {} files failed validation", args.paths.len())));
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Icp(a) => cmd_icp(a),
        Command::Check(a) => cmd_check(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}
