//! The `geopath` command line: one subcommand per pipeline stage plus
//! `run-all`, which chains them from a single config file.
//!
//! Precedence for every setting is: built-in default, then the `--config`
//! file, then explicit flags. Stages never embed timestamps, absolute output
//! paths or thread counts in what they write, so reruns with the same inputs
//! and seeds produce byte-identical trees.

pub mod config;

use std::fs;
use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::align::{self, MatchOpts};
use crate::error::{Error, Result};
use crate::geodesic::{self, GeodesicOpts, Path, TracePoint};
use crate::io;
use crate::metrics;
use crate::nn::{MlpConfig, ModelParams};
use crate::trainer::{self, TrainOpts};

pub use config::{parse_arch, DatasetSpec, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(
    name = "geopath",
    version,
    about = "Geodesic mode connectivity between trained classifiers"
)]
pub struct Cli {
    /// Worker threads. Outputs are identical for any value.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one endpoint model with seeded SGD.
    Train(TrainArgs),
    /// Permute model B's hidden units to match model A.
    Match(MatchArgs),
    /// Write the linear path between two models.
    Interpolate(InterpolateArgs),
    /// Minimize the JSD energy of a path with its endpoints fixed.
    Optimize(OptimizeArgs),
    /// Loss and accuracy of a model or of every model on a path.
    Evaluate(EvaluateArgs),
    /// Loss profiles and length curves for a linear and an optimized path.
    Report(ReportArgs),
    /// Every stage in sequence, driven by one config file.
    RunAll(RunAllArgs),
}

/// Dataset selection shared by the stages that need data.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Experiment config file (JSON); flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// gmm[:k=v,...] | moons[:k=v,...] | csv:PATH[,label=COL] | idx:IMAGES,LABELS
    #[arg(long)]
    pub dataset: Option<DatasetSpec>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Seed of the train/test split (defaults to the config's global seed).
    #[arg(long)]
    pub split_seed: Option<u64>,
}

impl DataArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(d) = &self.dataset {
            cfg.dataset = d.clone();
        }
        if let Some(f) = self.test_fraction {
            cfg.test_fraction = f;
        }
        if let Some(s) = self.split_seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Layer sizes, e.g. 2-8-8-5 (append +ln for layer normalization).
    #[arg(long)]
    pub arch: Option<String>,
    /// Initialization and shuffling seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Visit layers in an order shuffled by this seed instead of first-to-last.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Number of models on the path, endpoints included.
    #[arg(long, default_value_t = 25)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Path directory written by `interpolate`.
    #[arg(long)]
    pub path: PathBuf,
    /// Minibatch seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// A single checkpoint.
    #[arg(long, conflicts_with = "path", required_unless_present = "path")]
    pub model: Option<PathBuf>,
    /// A path directory.
    #[arg(long)]
    pub path: Option<PathBuf>,
    /// Also write the result to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Path before optimization.
    #[arg(long)]
    pub linear: PathBuf,
    /// Path after optimization.
    #[arg(long)]
    pub path: PathBuf,
    /// trace.json written by `optimize`.
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunAllArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<DatasetSpec>,
    #[arg(long)]
    pub arch: Option<String>,
    /// Global seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Path-optimizer learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Path-optimizer batch size.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code. Failures print one JSON object on stderr:
/// `{"error": kind, "field": subject, "message": text}`.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let line = json!({
                "error": e.kind(),
                "field": e.subject(),
                "message": e.to_string(),
            });
            eprintln!("{line}");
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(Error::invalid("--threads", "must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::invalid("--threads", e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Match(a) => cmd_match(&a),
        Command::Interpolate(a) => cmd_interpolate(&a),
        Command::Optimize(a) => cmd_optimize(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Report(a) => cmd_report(&a),
        Command::RunAll(a) => cmd_run_all(&a),
    })
}

/// Stage outputs are write-once: the directory must not exist yet or be empty.
fn fresh_dir(dir: &FsPath) -> Result<()> {
    if let Ok(mut entries) = fs::read_dir(dir) {
        if entries.next().is_some() {
            return Err(Error::invalid(
                "--out",
                format!("{} exists and is not empty", dir.display()),
            ));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_stage(dir: &FsPath, value: serde_json::Value) -> Result<()> {
    io::write_json(dir.join("stage.json"), &value)
}

fn train_stage(
    cfg: &ExperimentConfig,
    arch: &MlpConfig,
    opts: &TrainOpts,
    out: &FsPath,
) -> Result<ModelParams> {
    let (train, _) = cfg.load_data()?;
    log::info!("train: seed {}, split seed {}", opts.seed, cfg.split_seed());
    let model = trainer::train(arch, &train, opts)?;
    let eval = trainer::evaluate(&model, &train)?;
    log::info!(
        "train: loss {:.6}, accuracy {:.4}",
        eval.loss,
        eval.accuracy
    );
    fresh_dir(out)?;
    io::save_checkpoint(&model, out.join("model.json"))?;
    write_stage(
        out,
        json!({
            "version": 1,
            "stage": "train",
            "dataset": cfg.dataset,
            "test_fraction": cfg.test_fraction,
            "split_seed": cfg.split_seed(),
            "arch": arch,
            "opts": opts,
            "train_loss": eval.loss,
            "train_accuracy": eval.accuracy,
        }),
    )?;
    Ok(model)
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = args.data.resolve()?;
    let arch = match &args.arch {
        Some(a) => parse_arch(a)?,
        None => cfg.arch.clone(),
    };
    let mut opts = cfg.train.opts(args.seed.unwrap_or(cfg.model_seeds().0));
    if let Some(v) = args.lr {
        opts.learning_rate = v;
    }
    if let Some(v) = args.batch {
        opts.batch_size = v;
    }
    if let Some(v) = args.epochs {
        opts.epochs = v;
    }
    if let Some(v) = args.momentum {
        opts.momentum = v;
    }
    train_stage(&cfg, &arch, &opts, &args.out).map(|_| ())
}

fn match_stage(
    a: &ModelParams,
    b: &ModelParams,
    order_seed: Option<u64>,
    out: &FsPath,
) -> Result<ModelParams> {
    let opts = MatchOpts {
        order_seed,
        ..MatchOpts::default()
    };
    let outcome = align::weight_matching_with(a, b, &opts)?;
    let aligned = align::apply_permutation(b, &outcome.spec)?;
    log::info!(
        "match: {} sweeps, similarity {:.6} -> {:.6}",
        outcome.sweeps,
        outcome.objective[0],
        outcome.objective[outcome.objective.len() - 1]
    );
    fresh_dir(out)?;
    io::save_permutation(&outcome.spec, out.join("permutation.json"))?;
    io::save_checkpoint(&aligned, out.join("model_b_aligned.json"))?;
    write_stage(
        out,
        json!({
            "version": 1,
            "stage": "match",
            "order_seed": order_seed,
            "sweeps": outcome.sweeps,
            "objective": outcome.objective,
        }),
    )?;
    Ok(aligned)
}

pub fn cmd_match(args: &MatchArgs) -> Result<()> {
    let a = io::load_checkpoint(&args.a)?;
    let b = io::load_checkpoint(&args.b)?;
    match_stage(&a, &b, args.seed, &args.out).map(|_| ())
}

fn interpolate_stage(a: &ModelParams, b: &ModelParams, n: usize, out: &FsPath) -> Result<Path> {
    let path = geodesic::init_path(a, b, n)?;
    fresh_dir(out)?;
    io::save_path(&path, out)?;
    write_stage(out, json!({"version": 1, "stage": "interpolate", "n": n}))?;
    Ok(path)
}

pub fn cmd_interpolate(args: &InterpolateArgs) -> Result<()> {
    let a = io::load_checkpoint(&args.a)?;
    let b = io::load_checkpoint(&args.b)?;
    interpolate_stage(&a, &b, args.n, &args.out).map(|_| ())
}

fn optimize_stage(
    cfg: &ExperimentConfig,
    path: &Path,
    opts: &GeodesicOpts,
    out: &FsPath,
) -> Result<(Path, Vec<TracePoint>)> {
    // only the inputs survive past this point
    let inputs = cfg.load_data()?.0.features;
    log::info!(
        "optimize: seed {}, lr {}, batch {}, {} iterations, N = {}",
        opts.seed,
        opts.learning_rate,
        opts.batch_size,
        opts.iterations,
        path.len()
    );
    let (optimized, trace) = geodesic::optimize_path(path, &inputs, opts)?;
    if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
        log::info!(
            "optimize: energy {:.6e} -> {:.6e}",
            first.energy,
            last.energy
        );
    }
    fresh_dir(out)?;
    io::save_path(&optimized, out.join("path"))?;
    io::write_json(
        out.join("trace.json"),
        &json!({"version": 1, "trace": trace}),
    )?;
    write_stage(
        out,
        json!({
            "version": 1,
            "stage": "optimize",
            "dataset": cfg.dataset,
            "test_fraction": cfg.test_fraction,
            "split_seed": cfg.split_seed(),
            "opts": opts,
        }),
    )?;
    Ok((optimized, trace))
}

pub fn cmd_optimize(args: &OptimizeArgs) -> Result<()> {
    let cfg = args.data.resolve()?;
    let path = io::load_path(&args.path)?;
    let mut opts = cfg.geodesic.opts(args.seed.unwrap_or(cfg.geodesic_seed()));
    if let Some(v) = args.lr {
        opts.learning_rate = v;
    }
    if let Some(v) = args.batch {
        opts.batch_size = v;
    }
    if let Some(v) = args.iterations {
        opts.iterations = v;
    }
    if let Some(v) = args.eval_every {
        opts.eval_every = v;
    }
    optimize_stage(&cfg, &path, &opts, &args.out).map(|_| ())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let cfg = args.data.resolve()?;
    let (train, test) = cfg.load_data()?;
    let models = match (&args.model, &args.path) {
        (Some(m), _) => vec![io::load_checkpoint(m)?],
        (None, Some(p)) => io::load_path(p)?.into_models(),
        (None, None) => return Err(Error::invalid("--model", "give --model or --path")),
    };
    let rows = models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let tr = trainer::evaluate(m, &train)?;
            let te = trainer::evaluate(m, &test)?;
            Ok(json!({
                "index": i + 1,
                "train_loss": tr.loss,
                "train_accuracy": tr.accuracy,
                "test_loss": te.loss,
                "test_accuracy": te.accuracy,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let doc = json!({"version": 1, "models": rows});
    println!(
        "{}",
        serde_json::to_string_pretty(&doc).expect("serializable")
    );
    if let Some(out) = &args.out {
        io::write_json(out, &doc)?;
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct TraceDoc {
    version: u64,
    trace: Vec<TracePoint>,
}

fn report_stage(
    cfg: &ExperimentConfig,
    linear: &Path,
    optimized: &Path,
    trace: &[TracePoint],
    out: &FsPath,
) -> Result<()> {
    let (train, test) = cfg.load_data()?;
    let pre = metrics::loss_profile(linear, &train, &test)?;
    let post = metrics::loss_profile(optimized, &train, &test)?;
    log::info!(
        "report: train barrier {:.4} -> {:.4}, sum sqrt(JSD) {:.4} -> {:.4}",
        pre.train_barrier(),
        post.train_barrier(),
        pre.lengths.jsd_length,
        post.lengths.jsd_length
    );
    fresh_dir(out)?;
    metrics::write_report(&pre, &post, trace, out)
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let cfg = args.data.resolve()?;
    let linear = io::load_path(&args.linear)?;
    let optimized = io::load_path(&args.path)?;
    let doc: TraceDoc = io::read_json(&args.trace)?;
    if doc.version != io::FORMAT_VERSION {
        return Err(Error::Version {
            what: "trace",
            found: doc.version,
            expected: io::FORMAT_VERSION,
        });
    }
    report_stage(&cfg, &linear, &optimized, &doc.trace, &args.out)
}

impl RunAllArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(d) = &self.dataset {
            cfg.dataset = d.clone();
        }
        if let Some(a) = &self.arch {
            cfg.arch = parse_arch(a)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(v) = self.lr {
            cfg.geodesic.learning_rate = v;
        }
        if let Some(v) = self.batch {
            cfg.geodesic.batch_size = v;
        }
        if let Some(v) = self.iterations {
            cfg.geodesic.iterations = v;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs the whole pipeline. Layout under the output directory:
/// `config.json`, `model_a/`, `model_b/`, `match/` (when aligning),
/// `linear/`, `optimized/`, `report/`.
pub fn cmd_run_all(args: &RunAllArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Error::invalid("out", "set --out or \"out\" in the config"))?;
    fresh_dir(&out)?;
    let mut recorded = cfg.clone();
    recorded.out = None;
    io::write_json(out.join("config.json"), &recorded)?;

    let (seed_a, seed_b) = cfg.model_seeds();
    let a = train_stage(
        &cfg,
        &cfg.arch,
        &cfg.train.opts(seed_a),
        &out.join("model_a"),
    )?;
    let b = train_stage(
        &cfg,
        &cfg.arch,
        &cfg.train.opts(seed_b),
        &out.join("model_b"),
    )?;
    let b = if cfg.align {
        match_stage(&a, &b, cfg.match_order_seed, &out.join("match"))?
    } else {
        b
    };
    let linear = interpolate_stage(&a, &b, cfg.n, &out.join("linear"))?;
    let opts = cfg.geodesic.opts(cfg.geodesic_seed());
    let (optimized, trace) = optimize_stage(&cfg, &linear, &opts, &out.join("optimized"))?;
    report_stage(&cfg, &linear, &optimized, &trace, &out.join("report"))
}
