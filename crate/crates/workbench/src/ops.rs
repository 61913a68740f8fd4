use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::Utc;
use planforge_core::dataset::{
    build_corner_histogram, load_dataset, record_to_json, BubbleGraph, CornerHistogram, FloorplanRecord, GraphWire,
    Strictness,
};
use planforge_core::denoiser::{
    fine_tune, load_checkpoint, parameter_digest, save_checkpoint, train_with, DenoiserModel, LossRecord, TrainHooks,
};
use planforge_core::diffusion::{sample, SampleRequest, SamplerOptions};
use planforge_core::geometry::{AdjacencyThresholds, Boundary, Floorplan, Point, Polygon};
use planforge_core::metrics::{
    boundary_violations, diversity_score, evaluate, graph_compatibility_with, mean_std, FeatureExtractor,
    MetricsReport,
};
use serde::{Deserialize, Serialize};

use crate::config::WorkbenchConfig;
use crate::render::save_png;

/// Generation condition: graph, optional boundary and optional per-room corner counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub graph: BubbleGraph,
    pub boundary: Option<Boundary>,
    pub corner_counts: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionWire {
    pub graph: GraphWire,
    #[serde(default)]
    pub boundary: Option<Vec<Point>>,
    #[serde(default)]
    pub corner_counts: Option<Vec<usize>>,
}

pub fn boundary_from_points(points: Vec<Point>) -> planforge_core::Result<Boundary> {
    Ok(Boundary::new(Polygon::new(points)?))
}

impl ConditionWire {
    pub fn into_condition(self) -> planforge_core::Result<Condition> {
        Ok(Condition {
            graph: BubbleGraph::try_from(self.graph)?,
            boundary: self.boundary.map(boundary_from_points).transpose()?,
            corner_counts: self.corner_counts,
        })
    }
}

impl From<&FloorplanRecord> for Condition {
    fn from(r: &FloorplanRecord) -> Self {
        Condition {
            graph: r.graph.clone(),
            boundary: r.plan.boundary.clone(),
            corner_counts: Some(r.plan.corner_counts()),
        }
    }
}

/// Reads a condition file: either `{graph, boundary?, corner_counts?}` or a dataset record.
pub fn read_condition(path: &Path) -> Result<Condition> {
    let text = fs::read_to_string(path).with_context(|| format!("reading condition {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing condition {}", path.display()))?;
    if value.get("rooms").is_some() {
        let rec = planforge_core::dataset::parse_record(text.trim())?;
        return Ok(Condition::from(&rec));
    }
    let wire: ConditionWire = serde_path_to_error::deserialize(value)
        .map_err(|e| anyhow!("condition field `{}`: {}", e.path(), e.inner()))?;
    Ok(wire.into_condition()?)
}

pub fn load_records(path: &Path) -> Result<Vec<FloorplanRecord>> {
    let ds = load_dataset(path, Strictness::Strict).with_context(|| format!("loading dataset {}", path.display()))?;
    if ds.records.is_empty() {
        bail!("dataset {} is empty", path.display());
    }
    Ok(ds.records)
}

pub fn load_model(path: &Path) -> Result<DenoiserModel> {
    load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

/// Creates `<home>/runs/<UTC timestamp>-seed<seed>`, suffixed when the name is taken.
pub fn create_run_dir(root: &Path, seed: u64) -> Result<PathBuf> {
    let stamp = Utc::now().format("%Y%m%d-%H%M%S");
    let base = root.join(format!("{stamp}-seed{seed}"));
    let mut dir = base.clone();
    let mut n = 1;
    while dir.exists() {
        dir = PathBuf::from(format!("{}-{n}", base.display()));
        n += 1;
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Recorded next to every run so it can be repeated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub created_at: String,
    pub config_digest: String,
    pub seed: u64,
    pub start_checkpoint: Option<PathBuf>,
    pub shots: Option<usize>,
}

struct RunHooks<'a> {
    csv: BufWriter<File>,
    checkpoints: PathBuf,
    saved: Vec<PathBuf>,
    progress: &'a mut dyn FnMut(&LossRecord),
}

impl TrainHooks for RunHooks<'_> {
    fn on_step(&mut self, r: &LossRecord) -> planforge_core::Result<()> {
        writeln!(self.csv, "{},{:e},{},{},{}", r.step, r.lr, r.total, r.mse, r.ce)?;
        (self.progress)(r);
        Ok(())
    }

    fn on_checkpoint(&mut self, model: &DenoiserModel) -> planforge_core::Result<()> {
        self.csv.flush()?;
        let dir = self.checkpoints.join(format!("step-{:06}", model.step));
        save_checkpoint(model, &dir)?;
        self.saved.push(dir);
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub final_checkpoint: PathBuf,
    pub digest: String,
    pub final_loss: Option<f64>,
}

/// Trains (or fine-tunes `start` on `shots` records) inside `run_dir`, writing the resolved
/// config, a run manifest, `loss.csv` and checkpoints under `checkpoints/step-NNNNNN`.
pub fn run_training(
    cfg: &WorkbenchConfig,
    run_dir: &Path,
    records: &[FloorplanRecord],
    start: Option<(&Path, DenoiserModel)>,
    shots: Option<usize>,
    progress: &mut dyn FnMut(&LossRecord),
) -> Result<TrainOutcome> {
    fs::create_dir_all(run_dir)?;
    fs::write(run_dir.join("config.toml"), cfg.to_toml())?;
    let manifest = RunManifest {
        command: if shots.is_some() { "finetune" } else { "train" }.into(),
        created_at: Utc::now().to_rfc3339(),
        config_digest: cfg.digest(),
        seed: cfg.train.seed,
        start_checkpoint: start.as_ref().map(|(p, _)| p.to_path_buf()),
        shots,
    };
    fs::write(run_dir.join("run.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    let sched = cfg.schedule.build()?;
    let mut model = match start {
        Some((_, m)) => m,
        None => DenoiserModel::new(cfg.model.clone(), cfg.train.seed)?,
    };
    let mut csv = BufWriter::new(File::create(run_dir.join("loss.csv"))?);
    writeln!(csv, "step,lr,total,mse,ce")?;
    let mut hooks = RunHooks { csv, checkpoints: run_dir.join("checkpoints"), saved: Vec::new(), progress };
    let log = match shots {
        Some(k) => fine_tune(&mut model, records, k, &sched, &cfg.train, &mut hooks)?,
        None => train_with(&mut model, records, &sched, &cfg.train, &mut hooks)?,
    };
    hooks.csv.flush()?;
    if hooks.saved.is_empty() {
        // zero-shot fine-tuning or zero steps: keep the starting parameters as the result
        hooks.on_checkpoint(&model)?;
    }
    let final_checkpoint = hooks.saved.last().cloned().expect("at least one checkpoint");
    Ok(TrainOutcome {
        run_dir: run_dir.to_path_buf(),
        checkpoints: hooks.saved,
        final_checkpoint,
        digest: parameter_digest(&model),
        final_loss: log.last().map(|r| r.total),
    })
}

/// Scores of one sampled batch against its condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMetrics {
    /// Diversity over the batch; `None` below two plans.
    pub ds: Option<f64>,
    /// Boundary violation rate; `None` without a boundary.
    pub bc: Option<f64>,
    pub gc: f64,
    pub gc_std: f64,
}

pub fn batch_metrics(plans: &[Floorplan], cond: &Condition, tau: f64, adjacency: &AdjacencyThresholds) -> Result<BatchMetrics> {
    let ds = if plans.len() >= 2 {
        Some(diversity_score(&FeatureExtractor::geometric().extract_all(plans)?)?)
    } else {
        None
    };
    let bc = cond.boundary.as_ref().map(|b| {
        let v = boundary_violations(plans, b, tau);
        v.iter().filter(|&&x| x).count() as f64 / v.len().max(1) as f64
    });
    let gcs = plans
        .iter()
        .map(|p| graph_compatibility_with(&cond.graph, p, adjacency).map(|g| g as f64))
        .collect::<planforge_core::Result<Vec<_>>>()?;
    let (gc, gc_std) = mean_std(&gcs);
    Ok(BatchMetrics { ds, bc, gc, gc_std })
}

pub fn histogram_for(cfg: &WorkbenchConfig) -> Option<CornerHistogram> {
    let path = cfg.data.train.as_ref().filter(|p| p.is_file())?;
    let records = load_records(path).ok()?;
    build_corner_histogram(&records).ok()
}

/// Draws `n` plans for a condition.
pub fn sample_condition(
    model: &DenoiserModel,
    cfg: &WorkbenchConfig,
    cond: &Condition,
    lambda: f64,
    n: usize,
    seed: u64,
    hist: Option<&CornerHistogram>,
) -> Result<Vec<Floorplan>> {
    let sched = cfg.schedule.build()?;
    let req = SampleRequest {
        graph: cond.graph.clone(),
        boundary: cond.boundary.clone(),
        lambda,
        num_samples: n,
        seed,
        corner_counts: cond.corner_counts.clone(),
    };
    Ok(sample(model, &req, &sched, hist, SamplerOptions { stride: cfg.eval.stride })?)
}

/// Wire records for sampled plans, ids `sample-<seed>-<index>`.
pub fn sample_records(plans: &[Floorplan], graph: &BubbleGraph, seed: u64) -> Vec<FloorplanRecord> {
    plans
        .iter()
        .enumerate()
        .map(|(i, p)| FloorplanRecord { id: format!("sample-{seed}-{i:03}"), plan: p.clone(), graph: graph.clone() })
        .collect()
}

/// Writes `samples.jsonl` and `sample-NNN.png` into `out`.
pub fn write_samples(out: &Path, records: &[FloorplanRecord]) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut jsonl = String::new();
    for r in records {
        jsonl.push_str(&record_to_json(r));
        jsonl.push('\n');
    }
    fs::write(out.join("samples.jsonl"), jsonl)?;
    for (i, r) in records.iter().enumerate() {
        save_png(&r.plan, &out.join(format!("sample-{i:03}.png")))?;
    }
    Ok(())
}

/// Runs the evaluation protocol and writes `report.json` and `report.txt` into `out`.
pub fn run_evaluation(
    model: &DenoiserModel,
    cfg: &WorkbenchConfig,
    eval_set: &[FloorplanRecord],
    conditions: &[FloorplanRecord],
    out: &Path,
) -> Result<MetricsReport> {
    let sched = cfg.schedule.build()?;
    let report = evaluate(model, eval_set, conditions, &sched, &cfg.eval)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    fs::write(out.join("report.txt"), report.table())?;
    Ok(report)
}
