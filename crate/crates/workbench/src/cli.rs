use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use planforge_core::dataset::{
    apply_drift, build_corner_histogram, few_shot_subset, gen_pentagon_set, save_dataset, CornerHistogram,
};
use planforge_core::denoiser::parameter_digest;
use planforge_core::metrics::ExtractorKind;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::WorkbenchConfig;
use crate::ops;
use crate::server::{self, AppState};

#[derive(Debug, Parser)]
#[command(name = "planforge", version, about = "Boundary-conditioned floorplan diffusion workbench")]
pub struct Cli {
    /// Artifact root; overrides $PLANFORGE_HOME.
    #[arg(long, global = true)]
    pub home: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a denoiser from a config file.
    Train(TrainArgs),
    /// Fine-tune a checkpoint on a few records.
    Finetune(FinetuneArgs),
    /// Generate plans for one condition.
    Sample(SampleArgs),
    /// Run the evaluation protocol.
    Eval(EvalArgs),
    /// Dataset utilities.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted override, e.g. `--set train.lr_start=5e-4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self, extra: &[String]) -> Result<WorkbenchConfig> {
        let mut all = self.overrides.clone();
        all.extend_from_slice(extra);
        WorkbenchConfig::load(self.config.as_deref(), &all)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub shots: usize,
    /// Records to draw shots from; defaults to `data.finetune`, then `data.train`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn unit_interval(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// JSON file holding `{graph, boundary?, corner_counts?}` or a dataset record.
    #[arg(long)]
    pub condition: PathBuf,
    /// Guidance weight in [0, 1]; 1 when omitted.
    #[arg(long, value_parser = unit_interval)]
    pub lambda: Option<f64>,
    #[arg(long, short, default_value_t = 4)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Corner-count histogram JSON, used when the condition has no corner counts.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Evaluation records; defaults to `data.eval`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Records driving the diversity score; defaults to the evaluation set.
    #[arg(long)]
    pub conditions: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub ds_conditions: Option<usize>,
    #[arg(long)]
    pub ds_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = unit_interval)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum)]
    pub extractor: Option<ExtractorArg>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ExtractorArg {
    Geometric,
    RasterProjection,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Write the procedural pentagon set.
    GenPentagon {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Swap the living-room and balcony labels of every record.
    Drift { input: PathBuf, output: PathBuf },
    /// Count (room type, corner count) pairs.
    Histogram {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a seeded few-shot subset.
    Subset {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Checkpoint to serve; defaults to `service.checkpoint`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
}

/// Exit status for a failed command: 2 when training aborted, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let aborted = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<planforge_core::Error>(),
            Some(planforge_core::Error::Diverged { .. } | planforge_core::Error::NumericFailure(_))
        )
    });
    if aborted {
        2
    } else {
        1
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let home = cli.home.unwrap_or_else(crate::home_dir);
    match cli.command {
        Command::Train(a) => train(a, &home),
        Command::Finetune(a) => finetune(a, &home),
        Command::Sample(a) => sample(a),
        Command::Eval(a) => eval(a),
        Command::Dataset(d) => dataset(d),
        Command::Serve(a) => serve(a, &home),
    }
}

fn progress_logger(total: usize) -> impl FnMut(&planforge_core::denoiser::LossRecord) {
    let every = (total / 20).max(1);
    move |r| {
        if r.step % every == 0 || r.step == total {
            log::info!("step {}/{} loss {:.5} mse {:.5} ce {:.5}", r.step, total, r.total, r.mse, r.ce);
        }
    }
}

fn train(a: TrainArgs, home: &Path) -> Result<()> {
    let mut extra = Vec::new();
    extra.extend(a.steps.map(|s| format!("train.steps={s}")));
    extra.extend(a.seed.map(|s| format!("train.seed={s}")));
    let cfg = a.config.load(&extra)?;
    let records = ops::load_records(&cfg.dataset("data.train")?)?;
    let run_dir = ops::create_run_dir(&home.join("runs"), cfg.train.seed)?;
    let out = ops::run_training(&cfg, &run_dir, &records, None, None, &mut progress_logger(cfg.train.steps))?;
    eprintln!("run directory {}", out.run_dir.display());
    eprintln!("parameter digest {}", out.digest);
    println!("{}", out.final_checkpoint.display());
    Ok(())
}

fn finetune(a: FinetuneArgs, home: &Path) -> Result<()> {
    let mut extra = Vec::new();
    extra.extend(a.steps.map(|s| format!("train.steps={s}")));
    extra.extend(a.seed.map(|s| format!("train.seed={s}")));
    let mut cfg = a.config.load(&extra)?;
    let path = match a.dataset {
        Some(p) => p,
        None if cfg.data.finetune.is_some() => cfg.dataset("data.finetune")?,
        None => cfg.dataset("data.train")?,
    };
    let records = ops::load_records(&path)?;
    let model = ops::load_model(&a.checkpoint)?;
    cfg.model = model.config.clone();
    let run_dir = ops::create_run_dir(&home.join("runs"), cfg.train.seed)?;
    let start = Some((a.checkpoint.as_path(), model));
    let out =
        ops::run_training(&cfg, &run_dir, &records, start, Some(a.shots), &mut progress_logger(cfg.train.steps))?;
    eprintln!("run directory {}", out.run_dir.display());
    eprintln!("parameter digest {}", out.digest);
    println!("{}", out.final_checkpoint.display());
    Ok(())
}

#[derive(Serialize)]
struct SampleManifest<'a> {
    command: &'static str,
    checkpoint: &'a Path,
    parameter_digest: String,
    config_digest: String,
    condition: &'a Path,
    condition_sha256: String,
    lambda: f64,
    n: usize,
    seed: u64,
}

fn sample(a: SampleArgs) -> Result<()> {
    if a.n == 0 {
        bail!("--n must be at least 1");
    }
    let mut cfg = a.config.load(&[])?;
    let model = ops::load_model(&a.checkpoint)?;
    cfg.model = model.config.clone();
    let cond = ops::read_condition(&a.condition)?;
    if cond.boundary.is_none() && a.lambda.is_some() {
        eprintln!("warning: condition has no boundary; guidance is inert and --lambda is ignored");
    }
    let hist: Option<CornerHistogram> = match &a.histogram {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading histogram {}", p.display()))?;
            Some(serde_json::from_str(&text).with_context(|| format!("parsing histogram {}", p.display()))?)
        }
        None if cond.corner_counts.is_none() => ops::histogram_for(&cfg),
        None => None,
    };
    let lambda = a.lambda.unwrap_or(1.0);
    let plans = ops::sample_condition(&model, &cfg, &cond, lambda, a.n, a.seed, hist.as_ref())?;
    let records = ops::sample_records(&plans, &cond.graph, a.seed);
    ops::write_samples(&a.out, &records)?;
    let manifest = SampleManifest {
        command: "sample",
        checkpoint: &a.checkpoint,
        parameter_digest: parameter_digest(&model),
        config_digest: cfg.digest(),
        condition: &a.condition,
        condition_sha256: hex::encode(Sha256::digest(fs::read(&a.condition)?)),
        lambda,
        n: a.n,
        seed: a.seed,
    };
    fs::write(a.out.join("run.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    let m = ops::batch_metrics(&plans, &cond, cfg.eval.tau, &cfg.eval.adjacency)?;
    match m.bc {
        Some(bc) => println!("BC {bc:.4}"),
        None => println!("BC n/a (no boundary)"),
    }
    println!("GC {:.4} ± {:.4}", m.gc, m.gc_std);
    if let Some(ds) = m.ds {
        println!("DS {ds:.4}");
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut cfg = a.config.load(&[])?;
    let model = ops::load_model(&a.checkpoint)?;
    cfg.model = model.config.clone();
    let p = &mut cfg.eval;
    p.sample_count = a.samples.unwrap_or(p.sample_count);
    p.ds_conditions = a.ds_conditions.unwrap_or(p.ds_conditions);
    p.ds_samples = a.ds_samples.unwrap_or(p.ds_samples);
    p.seed = a.seed.unwrap_or(p.seed);
    p.lambda = a.lambda.unwrap_or(p.lambda);
    if let Some(kind) = a.extractor {
        p.extractor.kind = match kind {
            ExtractorArg::Geometric => ExtractorKind::Geometric,
            ExtractorArg::RasterProjection => ExtractorKind::RasterProjection,
        };
        if matches!(kind, ExtractorArg::Geometric) {
            p.extractor.dim = planforge_core::metrics::GEOMETRIC_DIM;
        }
    }
    cfg.validate()?;
    let eval_path = match a.dataset {
        Some(p) => p,
        None => cfg.dataset("data.eval")?,
    };
    let eval_set = ops::load_records(&eval_path)?;
    let conditions = match (a.conditions, &cfg.data.conditions) {
        (Some(p), _) => ops::load_records(&p)?,
        (None, Some(_)) => ops::load_records(&cfg.dataset("data.conditions")?)?,
        (None, None) => eval_set.clone(),
    };
    let report = ops::run_evaluation(&model, &cfg, &eval_set, &conditions, &a.out)?;
    print!("{}", report.table());
    Ok(())
}

fn dataset(cmd: DatasetCommand) -> Result<()> {
    match cmd {
        DatasetCommand::GenPentagon { seed, n, out } => {
            let m = save_dataset(&out, &gen_pentagon_set(seed, n))?;
            println!("{} records -> {} (sha256 {})", m.record_count, out.display(), m.source_hash);
        }
        DatasetCommand::Drift { input, output } => {
            let records = ops::load_records(&input)?;
            let m = save_dataset(&output, &apply_drift(&records))?;
            println!("{} records -> {}", m.record_count, output.display());
        }
        DatasetCommand::Histogram { input, out } => {
            let h = build_corner_histogram(&ops::load_records(&input)?)?;
            fs::write(&out, serde_json::to_string_pretty(&h)? + "\n")?;
            println!("{} entries -> {}", h.iter().count(), out.display());
        }
        DatasetCommand::Subset { input, output, k, seed } => {
            let sub = few_shot_subset(&ops::load_records(&input)?, k, seed)?;
            let m = save_dataset(&output, &sub)?;
            println!("{} records -> {}", m.record_count, output.display());
        }
    }
    Ok(())
}

fn serve(a: ServeArgs, home: &Path) -> Result<()> {
    let cfg = a.config.load(&[])?;
    let checkpoint = match a.checkpoint.or_else(|| cfg.service.checkpoint.clone()) {
        Some(p) => p,
        None => bail!("config field `service.checkpoint` is not set and no --checkpoint was given"),
    };
    let host = a.host.unwrap_or_else(|| cfg.service.host.clone());
    let port = a.port.unwrap_or(cfg.service.port);
    let state = AppState::new(cfg, &checkpoint, home)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(server::serve(state, &host, port))
}
