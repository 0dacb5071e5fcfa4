//! Command-line front end: segmentation, synthetic scenes, noise benchmarks
//! and evaluation. Every command is deterministic given its inputs and seed.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use laav::dataio::{
    add_noise, format_labels, format_metrics, load_labels, load_trajectories, misclassification_error,
    synth_scene, Metrics, MotionKind, NoiseSpec, SceneSpec,
};
use laav::pipeline::{segment, PipelineConfig, RvInit, Segmentation};
use laav::seed::{derive_indexed, derive_seed};
use laav::TrajectorySet;
use rayon::prelude::*;

use config::FileConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] laav::Error),
    #[error("refinement did not converge after {trials} trials")]
    NotConverged { trials: usize },
}

impl CliError {
    /// 2 for input and parse problems, 3 for numeric failures, 4 when
    /// refinement exhausted its trials.
    pub fn exit_code(&self) -> i32 {
        use laav::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::NotConverged { .. } => 4,
            CliError::Core(e) => match e {
                E::Parse { .. } | E::DimensionMismatch { .. } | E::InvalidInput(_) | E::Io(_) => 2,
                _ => 3,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "input",
            3 => "numeric",
            _ => "convergence",
        }
    }

    /// Single line: `error[<kind>]: <message>`.
    pub fn line(&self) -> String {
        let msg: String = self.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error[{}]: {msg}", self.kind())
    }
}

#[derive(Debug, Parser)]
#[command(name = "laav", version, about = "Motion segmentation of feature trajectories")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment a trajectory file.
    Segment(SegmentArgs),
    /// Write a synthetic scene with ground truth.
    Synth(SynthArgs),
    /// Accuracy and convergence over noise levels, atom-initialized versus
    /// randomly initialized refinement.
    BenchNoise(BenchArgs),
    /// Score a labels file against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args, Default)]
pub struct PipelineArgs {
    /// Number of motions (defaults to the count stored in the input).
    #[arg(long)]
    pub motions: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Atom exclusion radius in pixels.
    #[arg(long)]
    pub r1: Option<f64>,
    /// Atom neighborhood radius in pixels.
    #[arg(long)]
    pub r2: Option<f64>,
    /// Vote strength of the refinement stage.
    #[arg(long)]
    pub lambda_vote: Option<f64>,
    #[arg(long)]
    pub lambda_affinity: Option<f64>,
    /// Vote histogram forgetting factor.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Features sampled per group per refinement iteration.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_name = "atoms|random")]
    pub rv_init: Option<String>,
    /// `key = value` file; flags take precedence.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Labels file.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Metrics file (default: `<output>.metrics`).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Directory receiving per-stage snapshots.
    #[arg(long, value_name = "DIR")]
    pub stage_dump: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub motions: Option<usize>,
    /// Features per motion, comma separated (default 100 each).
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Motion kinds, comma separated: translation, rotation, affine.
    #[arg(long)]
    pub kinds: Option<String>,
    /// Gaussian noise added to every coordinate.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trajectory file (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scene file; without it a synthetic scene is generated.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Features per motion of the generated scene, comma separated.
    #[arg(long)]
    pub features: Option<String>,
    /// Frames of the generated scene.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Noise levels, comma separated.
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Table file (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Labels file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Trajectory file holding the ground truth.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub motions: Option<usize>,
    /// Metrics file (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Segment(a) => cmd_segment(a),
        Command::Synth(a) => cmd_synth(a),
        Command::BenchNoise(a) => cmd_bench_noise(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn file_config(path: &Option<PathBuf>) -> Result<FileConfig, CliError> {
    path.as_deref().map_or_else(|| Ok(FileConfig::default()), FileConfig::load)
}

fn required<T>(v: Option<T>, name: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("missing --{name}")))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::Core(laav::Error::Io(format!("{}: {e}", p.display())))),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Core(laav::Error::Io(e.to_string())))
        }
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad {what} entry {:?}", t.trim())))
        })
        .collect()
}

/// Pipeline settings from flags and the config file.
pub fn resolve_pipeline(args: &PipelineArgs, file: &mut FileConfig) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig {
        num_motions: file.resolve("motions", args.motions)?,
        seed: file.resolve("seed", args.seed)?.unwrap_or(0),
        ..PipelineConfig::default()
    };
    if let Some(v) = file.resolve("r1", args.r1)? {
        cfg.atoms.r1 = v;
    }
    if let Some(v) = file.resolve("r2", args.r2)? {
        cfg.atoms.r2 = v;
    }
    if let Some(v) = file.resolve("lambda-vote", args.lambda_vote)? {
        cfg.rv.lambda_vote = v;
    }
    if let Some(v) = file.resolve("lambda-affinity", args.lambda_affinity)? {
        cfg.voting.lambda_affinity = v;
    }
    if let Some(v) = file.resolve("alpha", args.alpha)? {
        cfg.rv.alpha = v;
    }
    if let Some(v) = file.resolve("m", args.m)? {
        cfg.rv.m = v;
    }
    if let Some(v) = file.resolve::<String>("rv-init", args.rv_init.clone())? {
        cfg.rv_init =
            RvInit::parse(&v).ok_or_else(|| CliError::Usage(format!("rv-init must be atoms or random, got {v:?}")))?;
    }
    cfg.atoms.validate()?;
    cfg.voting.validate()?;
    cfg.rv.validate()?;
    Ok(cfg)
}

fn cmd_segment(a: SegmentArgs) -> Result<(), CliError> {
    let mut file = file_config(&a.pipeline.config)?;
    let input: PathBuf = required(file.resolve("input", a.input)?, "input")?;
    let output: PathBuf = required(file.resolve("output", a.output)?, "output")?;
    let metrics_path: Option<PathBuf> = file.resolve("metrics", a.metrics)?;
    let stage_dump: Option<PathBuf> = file.resolve("stage-dump", a.stage_dump)?;
    let cfg = resolve_pipeline(&a.pipeline, &mut file)?;
    file.finish()?;

    let traj = load_trajectories(&input)?;
    let seg = segment(&traj, &cfg)?;
    let metrics = Metrics {
        error_total: traj
            .ground_truth()
            .map(|gt| misclassification_error(&seg.labeling.labels, gt, seg.num_motions))
            .transpose()?,
        num_motions: seg.num_motions,
        iterations: Some(seg.iterations),
        converged: Some(seg.converged),
        seed: Some(cfg.seed),
    };
    write_out(Some(&output), &format_labels(&seg.labeling))?;
    let metrics_path = metrics_path.unwrap_or_else(|| {
        let mut p = output.clone().into_os_string();
        p.push(".metrics");
        p.into()
    });
    write_out(Some(&metrics_path), &format_metrics(&metrics))?;
    if let Some(dir) = stage_dump {
        dump_stages(&dir, &seg)?;
    }
    if !seg.converged {
        return Err(CliError::NotConverged { trials: seg.trials });
    }
    Ok(())
}

fn opt_label(l: Option<usize>) -> String {
    l.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

/// Per-stage snapshots: atoms, fine models, coarse motions, final labels and
/// the accumulated affinity between fine models.
pub fn dump_stages(dir: &Path, seg: &Segmentation) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Core(laav::Error::Io(format!("{}: {e}", dir.display()))))?;
    let st = &seg.stages;

    let mut s = String::from("atom\tframe_l\tframe_r\tfine_model\tfeatures\n");
    for (i, atom) in st.atoms.atoms.iter().enumerate() {
        let ids: Vec<String> = atom.feature_ids.iter().map(|f| f.to_string()).collect();
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}",
            atom.id,
            atom.frames.l,
            atom.frames.r,
            opt_label(st.fine_atom_labels.get(i).copied()),
            ids.join(",")
        );
    }
    write_out(Some(&dir.join("atoms.tsv")), &s)?;

    for (name, labels) in [("fine.tsv", &st.fine_feature_labels), ("coarse.tsv", &st.coarse_feature_labels)] {
        let mut s = String::from("feature\tlabel\n");
        for (f, l) in labels.iter().enumerate() {
            let _ = writeln!(s, "{f}\t{}", opt_label(*l));
        }
        write_out(Some(&dir.join(name)), &s)?;
    }

    let lab = &seg.labeling;
    let mut s = String::from("feature\tlabel\tconfidence\tsource\n");
    for f in 0..lab.labels.len() {
        let _ = writeln!(s, "{f}\t{}\t{:.6}\t{}", lab.labels[f], lab.confidence[f], lab.source[f].as_str());
    }
    write_out(Some(&dir.join("final.tsv")), &s)?;

    if let Some(z) = &st.affinity {
        let n = z.dim();
        let mut s = String::from("model");
        for j in 0..n {
            let _ = write!(s, "\t{j}");
        }
        s.push('\n');
        for i in 0..n {
            let _ = write!(s, "{i}");
            for j in 0..n {
                let _ = write!(s, "\t{:.6}", z.get(i, j));
            }
            s.push('\n');
        }
        write_out(Some(&dir.join("affinity.tsv")), &s)?;
    }
    Ok(())
}

fn scene_spec(
    motions: Option<usize>,
    features: Option<String>,
    frames: Option<usize>,
    kinds: Option<String>,
    seed: u64,
) -> Result<SceneSpec, CliError> {
    let counts: Vec<usize> = match features {
        Some(f) => parse_list(&f, "feature count")?,
        None => vec![100; motions.unwrap_or(2)],
    };
    if let Some(c) = motions {
        if c != counts.len() {
            return Err(CliError::Usage(format!("--motions {c} but {} feature counts", counts.len())));
        }
    }
    let mut spec = SceneSpec::new(counts, frames.unwrap_or(20), seed);
    if let Some(k) = kinds {
        spec.motion_kinds = k
            .split(',')
            .map(|t| MotionKind::parse(t.trim()).ok_or_else(|| CliError::Usage(format!("unknown motion kind {t:?}"))))
            .collect::<Result<_, _>>()?;
    }
    spec.validate()?;
    Ok(spec)
}

fn cmd_synth(a: SynthArgs) -> Result<(), CliError> {
    let mut file = file_config(&a.config)?;
    let motions = file.resolve("motions", a.motions)?;
    let features = file.resolve("features", a.features)?;
    let frames = file.resolve("frames", a.frames)?;
    let kinds = file.resolve("kinds", a.kinds)?;
    let sigma = file.resolve("sigma", a.sigma)?.unwrap_or(0.0);
    let seed = file.resolve("seed", a.seed)?.unwrap_or(0);
    let output: Option<PathBuf> = file.resolve("output", a.output)?;
    file.finish()?;

    let spec = scene_spec(motions, features, frames, kinds, seed)?;
    let traj = add_noise(&synth_scene(&spec)?, &NoiseSpec { sigma, seed })?;
    write_out(output.as_deref(), &laav::dataio::format_trajectories(&traj))
}

/// One benchmark measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub arm: RvInit,
    pub sigma: f64,
    pub rep: usize,
    pub accuracy: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn arm_name(a: RvInit) -> &'static str {
    match a {
        RvInit::Atoms => "atoms",
        RvInit::Random => "random",
    }
}

/// Runs every (sigma, repetition, arm) combination. Repetition `r` segments
/// with seed `cfg.seed + r`, so repetition 0 at zero noise reproduces
/// `segment` with the same seed; the noise realization depends only on
/// `cfg.seed` and `r`, so both arms see the same noisy input.
pub fn bench_noise(
    scene: &TrajectorySet,
    sigmas: &[f64],
    reps: usize,
    cfg: &PipelineConfig,
) -> Result<Vec<BenchRow>, CliError> {
    let c = cfg.num_motions.unwrap_or(scene.num_motions());
    let gt = scene
        .ground_truth()
        .ok_or_else(|| CliError::Usage("benchmark scene needs ground-truth labels".into()))?;
    let noise_root = derive_seed(cfg.seed, "bench-noise");
    let jobs: Vec<(f64, usize, RvInit)> = sigmas
        .iter()
        .flat_map(|&s| (0..reps).flat_map(move |r| [RvInit::Atoms, RvInit::Random].map(|a| (s, r, a))))
        .collect();
    jobs.par_iter()
        .map(|&(sigma, rep, arm)| {
            let noisy = add_noise(scene, &NoiseSpec { sigma, seed: derive_indexed(noise_root, rep as u64) })?;
            let run_cfg = PipelineConfig {
                seed: cfg.seed.wrapping_add(rep as u64),
                rv_init: arm,
                num_motions: Some(c),
                ..cfg.clone()
            };
            let seg = segment(&noisy, &run_cfg)?;
            Ok(BenchRow {
                arm,
                sigma,
                rep,
                accuracy: 1.0 - misclassification_error(&seg.labeling.labels, gt, c)?,
                iterations: seg.iterations,
                converged: seg.converged,
            })
        })
        .collect()
}

/// Summary of one (sigma, arm) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub arm: RvInit,
    pub sigma: f64,
    pub mean_accuracy: f64,
    /// Population standard deviation.
    pub std_accuracy: f64,
    pub median_iterations: f64,
    pub convergence_rate: f64,
}

pub fn summarize(rows: &[BenchRow]) -> Vec<BenchSummary> {
    let mut keys: Vec<(f64, RvInit)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|k| k.0 == r.sigma && k.1 == r.arm) {
            keys.push((r.sigma, r.arm));
        }
    }
    keys.into_iter()
        .map(|(sigma, arm)| {
            let cell: Vec<&BenchRow> = rows.iter().filter(|r| r.sigma == sigma && r.arm == arm).collect();
            let n = cell.len() as f64;
            let mean = cell.iter().map(|r| r.accuracy).sum::<f64>() / n;
            let var = cell.iter().map(|r| (r.accuracy - mean).powi(2)).sum::<f64>() / n;
            let mut its: Vec<usize> = cell.iter().map(|r| r.iterations).collect();
            its.sort_unstable();
            let mid = its.len() / 2;
            let median = if its.len() % 2 == 1 {
                its[mid] as f64
            } else {
                (its[mid - 1] + its[mid]) as f64 / 2.0
            };
            BenchSummary {
                arm,
                sigma,
                mean_accuracy: mean,
                std_accuracy: var.sqrt(),
                median_iterations: median,
                convergence_rate: cell.iter().filter(|r| r.converged).count() as f64 / n,
            }
        })
        .collect()
}

/// Per-repetition rows followed by one summary row per (sigma, arm). In
/// summary rows `accuracy` is the mean, `iterations` the median and
/// `converged` the convergence rate.
pub fn format_bench(rows: &[BenchRow], summary: &[BenchSummary]) -> String {
    let mut s = String::from("row\tarm\tsigma\trep\taccuracy\taccuracy_std\titerations\tconverged\n");
    for r in rows {
        let _ = writeln!(
            s,
            "rep\t{}\t{}\t{}\t{:.6}\tNA\t{}\t{}",
            arm_name(r.arm),
            r.sigma,
            r.rep,
            r.accuracy,
            r.iterations,
            u8::from(r.converged)
        );
    }
    for m in summary {
        let _ = writeln!(
            s,
            "summary\t{}\t{}\tNA\t{:.6}\t{:.6}\t{}\t{:.6}",
            arm_name(m.arm),
            m.sigma,
            m.mean_accuracy,
            m.std_accuracy,
            m.median_iterations,
            m.convergence_rate
        );
    }
    s
}

fn cmd_bench_noise(a: BenchArgs) -> Result<(), CliError> {
    let mut file = file_config(&a.pipeline.config)?;
    let input: Option<PathBuf> = file.resolve("input", a.input)?;
    let features = file.resolve("features", a.features)?;
    let frames = file.resolve("frames", a.frames)?;
    let sigmas: String = file.resolve("sigma", a.sigma)?.unwrap_or_else(|| "0,0.5,1,2".into());
    let reps = file.resolve("reps", a.reps)?.unwrap_or(20);
    let output: Option<PathBuf> = file.resolve("output", a.output)?;
    let cfg = resolve_pipeline(&a.pipeline, &mut file)?;
    file.finish()?;

    let sigmas: Vec<f64> = parse_list(&sigmas, "sigma")?;
    if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(CliError::Usage(format!("sigma must be >= 0, got {s}")));
    }
    if reps == 0 {
        return Err(CliError::Usage("reps must be at least 1".into()));
    }
    let scene = match input {
        Some(p) => load_trajectories(&p)?,
        None => synth_scene(&scene_spec(cfg.num_motions, features, frames, None, cfg.seed)?)?,
    };
    let rows = bench_noise(&scene, &sigmas, reps, &cfg)?;
    write_out(output.as_deref(), &format_bench(&rows, &summarize(&rows)))
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let mut file = file_config(&a.config)?;
    let input: PathBuf = required(file.resolve("input", a.input)?, "input")?;
    let truth: PathBuf = required(file.resolve("truth", a.truth)?, "truth")?;
    let motions: Option<usize> = file.resolve("motions", a.motions)?;
    let output: Option<PathBuf> = file.resolve("output", a.output)?;
    file.finish()?;

    let labeling = load_labels(&input)?;
    let traj = load_trajectories(&truth)?;
    let gt = traj
        .ground_truth()
        .ok_or_else(|| CliError::Usage(format!("{} has no ground-truth labels", truth.display())))?;
    let c = motions.unwrap_or_else(|| {
        let seen = labeling.labels.iter().chain(gt).max().map_or(0, |m| m + 1);
        traj.num_motions().max(seen)
    });
    let metrics = Metrics {
        error_total: Some(misclassification_error(&labeling.labels, gt, c)?),
        num_motions: c,
        iterations: None,
        converged: None,
        seed: None,
    };
    write_out(output.as_deref(), &format_metrics(&metrics))
}
