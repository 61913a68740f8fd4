use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use planforge_core::dataset::{
    few_shot_subset, record_to_wire, CornerHistogram, GraphWire, RecordWire,
};
use planforge_core::denoiser::{parameter_digest, read_manifest, DenoiserModel, MANIFEST_FILE};
use planforge_core::geometry::Point;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::WorkbenchConfig;
use crate::jobs::{JobKind, JobRecord, JobStatus, JobStore};
use crate::ops::{self, BatchMetrics, Condition, ConditionWire};

/// Largest batch a single sampling request may ask for.
pub const MAX_SAMPLES_PER_REQUEST: usize = 64;

/// Shared, read-only service state. Loaded models are never mutated; training jobs work on
/// copies and write new checkpoints under their job directory.
#[derive(Clone)]
pub struct AppState {
    pub model: Arc<DenoiserModel>,
    pub checkpoint: PathBuf,
    pub cfg: Arc<WorkbenchConfig>,
    pub hist: Option<Arc<CornerHistogram>>,
    pub jobs: JobStore,
    pub home: PathBuf,
    cache: Arc<Mutex<HashMap<PathBuf, Arc<DenoiserModel>>>>,
}

impl AppState {
    pub fn new(cfg: WorkbenchConfig, checkpoint: &Path, home: &Path) -> Result<Self> {
        let model = ops::load_model(checkpoint)?;
        let hist = ops::histogram_for(&cfg).map(Arc::new);
        let checkpoint = fs::canonicalize(checkpoint).unwrap_or_else(|_| checkpoint.to_path_buf());
        fs::create_dir_all(home.join("jobs")).with_context(|| format!("creating {}", home.display()))?;
        Ok(Self {
            model: Arc::new(model),
            checkpoint,
            cfg: Arc::new(cfg),
            hist,
            jobs: JobStore::default(),
            home: home.to_path_buf(),
            cache: Arc::default(),
        })
    }

    /// The served model, or another checkpoint from the artifact root.
    fn model_for(&self, path: Option<&Path>) -> std::result::Result<Arc<DenoiserModel>, ApiError> {
        let Some(path) = path else { return Ok(self.model.clone()) };
        let bad = |msg: String| ApiError::field("checkpoint", msg);
        let canon = fs::canonicalize(path).map_err(|_| bad(format!("{} does not exist", path.display())))?;
        if canon == self.checkpoint {
            return Ok(self.model.clone());
        }
        let home = fs::canonicalize(&self.home).unwrap_or_else(|_| self.home.clone());
        if !canon.starts_with(&home) {
            return Err(bad(format!("{} is outside the artifact root", path.display())));
        }
        if let Some(m) = self.cache.lock().expect("model cache").get(&canon) {
            return Ok(m.clone());
        }
        let m = Arc::new(ops::load_model(&canon).map_err(|e| bad(format!("{e:#}")))?);
        self.cache.lock().expect("model cache").insert(canon, m.clone());
        Ok(m)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

/// JSON error body: `{"error": message, "fields": [{field, message}]}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    fields: Vec<FieldError>,
}

impl ApiError {
    fn field(field: &str, message: impl Into<String>) -> Self {
        let message = message.into();
        Self {
            status: StatusCode::BAD_REQUEST,
            message: format!("{field}: {message}"),
            fields: vec![FieldError { field: field.into(), message }],
        }
    }

    fn status(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into(), fields: Vec::new() }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::status(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message, "fields": self.fields }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

/// Deserializes a body, reporting the offending field path.
fn parse_body<T: DeserializeOwned>(body: &[u8]) -> std::result::Result<T, ApiError> {
    let value: Value = serde_json::from_slice(body)
        .map_err(|e| ApiError::status(StatusCode::BAD_REQUEST, format!("body is not valid JSON: {e}")))?;
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "body".to_string() } else { path };
        ApiError::field(&field, e.into_inner().to_string())
    })
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/sample", post(sample))
        .route("/api/jobs", get(list_jobs))
        .route("/api/jobs/train", post(submit_train))
        .route("/api/jobs/finetune", post(submit_finetune))
        .route("/api/jobs/{id}", get(job_status))
        .route("/api/checkpoints", get(checkpoints))
        .route("/api/evaluate", post(submit_evaluate))
        .route("/api/datasets", get(datasets))
        .with_state(state)
}

/// Binds `host:port` and serves until interrupted.
pub async fn serve(state: AppState, host: &str, port: u16) -> Result<()> {
    let addr = format!("{host}:{port}");
    let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
    log::info!("serving {} on http://{}", state.checkpoint.display(), listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn health(State(s): State<AppState>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "checkpoint": s.checkpoint,
        "step": s.model.step,
        "parameter_digest": parameter_digest(&s.model),
        "config_digest": s.cfg.digest(),
    }))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleBody {
    graph: GraphWire,
    #[serde(default)]
    boundary: Option<Vec<Point>>,
    #[serde(default = "default_lambda")]
    lambda: f64,
    #[serde(default = "default_n")]
    n: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    corner_counts: Option<Vec<usize>>,
    #[serde(default)]
    checkpoint: Option<PathBuf>,
}

fn default_lambda() -> f64 {
    1.0
}

fn default_n() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleResponse {
    pub plans: Vec<RecordWire>,
    pub metrics: BatchMetrics,
    pub lambda: f64,
    pub seed: u64,
    /// Set when a lambda was given for a condition without a boundary.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

fn check_sample_body(b: &SampleBody, cfg: &WorkbenchConfig) -> std::result::Result<Condition, ApiError> {
    if !(0.0..=1.0).contains(&b.lambda) || !b.lambda.is_finite() {
        return Err(ApiError::field("lambda", format!("{} outside [0, 1]", b.lambda)));
    }
    if b.n == 0 || b.n > MAX_SAMPLES_PER_REQUEST {
        return Err(ApiError::field("n", format!("{} outside 1..={MAX_SAMPLES_PER_REQUEST}", b.n)));
    }
    let wire = ConditionWire { graph: b.graph.clone(), boundary: None, corner_counts: b.corner_counts.clone() };
    let mut cond = wire.into_condition().map_err(|e| ApiError::field("graph", e.to_string()))?;
    if let Some(points) = &b.boundary {
        cond.boundary =
            Some(ops::boundary_from_points(points.clone()).map_err(|e| ApiError::field("boundary", e.to_string()))?);
    }
    let m = &cfg.model;
    if cond.graph.num_rooms() > m.max_rooms {
        return Err(ApiError::field(
            "graph",
            format!("{} rooms exceed max_rooms {}", cond.graph.num_rooms(), m.max_rooms),
        ));
    }
    if let Some(c) = &cond.corner_counts {
        if c.len() != cond.graph.num_rooms() {
            return Err(ApiError::field(
                "corner_counts",
                format!("{} entries for {} rooms", c.len(), cond.graph.num_rooms()),
            ));
        }
        if let Some(bad) = c.iter().find(|&&k| !(3..=m.max_corners_per_room).contains(&k)) {
            return Err(ApiError::field(
                "corner_counts",
                format!("{bad} outside 3..={}", m.max_corners_per_room),
            ));
        }
    }
    Ok(cond)
}

async fn sample(State(s): State<AppState>, body: axum::body::Bytes) -> ApiResult<SampleResponse> {
    let b: SampleBody = parse_body(&body)?;
    let mut cfg = (*s.cfg).clone();
    let model = s.model_for(b.checkpoint.as_deref())?;
    cfg.model = model.config.clone();
    let cond = check_sample_body(&b, &cfg)?;
    if cond.corner_counts.is_none() && s.hist.is_none() {
        return Err(ApiError::field("corner_counts", "required: the service has no corner histogram"));
    }
    let warning = cond.boundary.is_none().then(|| "condition has no boundary; guidance is inert".to_string());
    let hist = s.hist.clone();
    let (lambda, n, seed) = (b.lambda, b.n, b.seed);
    let result = tokio::task::spawn_blocking(move || -> Result<SampleResponse> {
        let plans = ops::sample_condition(&model, &cfg, &cond, lambda, n, seed, hist.as_deref())?;
        let metrics = ops::batch_metrics(&plans, &cond, cfg.eval.tau, &cfg.eval.adjacency)?;
        let plans = ops::sample_records(&plans, &cond.graph, seed).iter().map(record_to_wire).collect();
        Ok(SampleResponse { plans, metrics, lambda, seed, warning })
    })
    .await
    .map_err(ApiError::internal)?;
    result.map(Json).map_err(|e| match e.downcast_ref::<planforge_core::Error>() {
        Some(planforge_core::Error::Validation(m)) => ApiError::field("body", m.clone()),
        _ => ApiError::internal(format!("{e:#}")),
    })
}

async fn list_jobs(State(s): State<AppState>) -> Json<Vec<JobRecord>> {
    Json(s.jobs.list())
}

async fn job_status(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<JobRecord> {
    s.jobs
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError::status(StatusCode::NOT_FOUND, format!("unknown job {id}")))
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainBody {
    steps: Option<usize>,
    seed: Option<u64>,
    /// Dotted `key=value` config overrides.
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FinetuneBody {
    shots: usize,
    #[serde(default)]
    checkpoint: Option<PathBuf>,
    #[serde(default)]
    steps: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvaluateBody {
    checkpoint: Option<PathBuf>,
    samples: Option<usize>,
    ds_conditions: Option<usize>,
    ds_samples: Option<usize>,
    seed: Option<u64>,
    lambda: Option<f64>,
}

fn job_config(
    base: &WorkbenchConfig,
    steps: Option<usize>,
    seed: Option<u64>,
    overrides: &[String],
) -> std::result::Result<WorkbenchConfig, ApiError> {
    let mut table: toml::Table = toml::from_str(&base.to_toml()).map_err(ApiError::internal)?;
    let mut all: Vec<String> = overrides.to_vec();
    all.extend(steps.map(|v| format!("train.steps={v}")));
    all.extend(seed.map(|v| format!("train.seed={v}")));
    for o in &all {
        crate::config::apply_override(&mut table, o).map_err(|e| ApiError::field("overrides", e.to_string()))?;
    }
    let cfg = WorkbenchConfig::from_table(table).map_err(|e| ApiError::field("overrides", e.to_string()))?;
    cfg.validate().map_err(|e| ApiError::field("overrides", format!("{e:#}")))?;
    Ok(cfg)
}

fn new_job(s: &AppState, kind: JobKind) -> std::result::Result<JobRecord, ApiError> {
    let id = s.jobs.next_id();
    let dir = s.home.join("jobs").join(&id);
    fs::create_dir_all(&dir).map_err(ApiError::internal)?;
    Ok(JobRecord::new(id, kind, dir))
}

fn conflict(active: JobRecord) -> ApiError {
    ApiError::status(StatusCode::CONFLICT, format!("training job {} is still {:?}", active.id, active.status))
}

/// Runs `work` on a blocking thread, moving the job through running to done or failed.
fn spawn_job(s: &AppState, id: String, work: impl FnOnce(&JobStore, &str) -> Result<Vec<PathBuf>> + Send + 'static) {
    let jobs = s.jobs.clone();
    tokio::task::spawn_blocking(move || {
        let _ = jobs.update(&id, |j| j.advance(JobStatus::Running));
        let outcome = work(&jobs, &id);
        let _ = jobs.update(&id, |j| match outcome {
            Ok(artifacts) => {
                j.artifacts = artifacts;
                j.advance(JobStatus::Done)
            }
            Err(e) => {
                log::warn!("job {} failed: {e:#}", j.id);
                j.error = Some(format!("{e:#}"));
                j.advance(JobStatus::Failed)
            }
        });
    });
}

fn training_job(
    s: &AppState,
    kind: JobKind,
    cfg: WorkbenchConfig,
    records: Vec<planforge_core::dataset::FloorplanRecord>,
    start: Option<(PathBuf, DenoiserModel)>,
    shots: Option<usize>,
) -> std::result::Result<Json<JobRecord>, ApiError> {
    let mut job = new_job(s, kind)?;
    job.total_steps = Some(cfg.train.steps);
    job.progress = Some(0);
    let (id, dir) = (job.id.clone(), job.dir.clone());
    s.jobs.insert_training(job).map_err(conflict)?;
    spawn_job(s, id.clone(), move |jobs, id| {
        let mut report = |r: &planforge_core::denoiser::LossRecord| {
            let _ = jobs.update(id, |j| {
                j.progress = Some(r.step);
                Ok(())
            });
        };
        let start = start.as_ref().map(|(p, m)| (p.as_path(), m.clone()));
        let out = ops::run_training(&cfg, &dir, &records, start, shots, &mut report)?;
        let mut artifacts = vec![dir.join("config.toml"), dir.join("run.json"), dir.join("loss.csv")];
        artifacts.extend(out.checkpoints);
        Ok(artifacts)
    });
    Ok(Json(s.jobs.get(&id).expect("job inserted")))
}

fn load_dataset_field(cfg: &WorkbenchConfig, field: &str) -> std::result::Result<Vec<planforge_core::dataset::FloorplanRecord>, ApiError> {
    let path = cfg.dataset(field).map_err(|e| ApiError::field(field, e.to_string()))?;
    ops::load_records(&path).map_err(|e| ApiError::field(field, format!("{e:#}")))
}

async fn submit_train(State(s): State<AppState>, body: axum::body::Bytes) -> ApiResult<JobRecord> {
    let b: TrainBody = if body.is_empty() { TrainBody::default() } else { parse_body(&body)? };
    let cfg = job_config(&s.cfg, b.steps, b.seed, &b.overrides)?;
    let records = load_dataset_field(&cfg, "data.train")?;
    training_job(&s, JobKind::Train, cfg, records, None, None)
}

async fn submit_finetune(State(s): State<AppState>, body: axum::body::Bytes) -> ApiResult<JobRecord> {
    let b: FinetuneBody = parse_body(&body)?;
    let cfg = job_config(&s.cfg, b.steps, b.seed, &b.overrides)?;
    let field = if cfg.data.finetune.is_some() { "data.finetune" } else { "data.train" };
    let records = load_dataset_field(&cfg, field)?;
    if b.shots > records.len() {
        return Err(ApiError::field("shots", format!("{} exceeds the {} available records", b.shots, records.len())));
    }
    // validate the few-shot draw now so a bad request fails synchronously
    few_shot_subset(&records, b.shots, cfg.train.seed).map_err(|e| ApiError::field("shots", e.to_string()))?;
    let model = s.model_for(b.checkpoint.as_deref())?;
    let path = b.checkpoint.clone().unwrap_or_else(|| s.checkpoint.clone());
    // the checkpoint's architecture wins over the config's
    let mut cfg = cfg;
    cfg.model = model.config.clone();
    training_job(&s, JobKind::FineTune, cfg, records, Some((path, (*model).clone())), Some(b.shots))
}

async fn submit_evaluate(State(s): State<AppState>, body: axum::body::Bytes) -> ApiResult<JobRecord> {
    let b: EvaluateBody = if body.is_empty() { EvaluateBody::default() } else { parse_body(&body)? };
    let mut cfg = (*s.cfg).clone();
    let p = &mut cfg.eval;
    p.sample_count = b.samples.unwrap_or(p.sample_count);
    p.ds_conditions = b.ds_conditions.unwrap_or(p.ds_conditions);
    p.ds_samples = b.ds_samples.unwrap_or(p.ds_samples);
    p.seed = b.seed.unwrap_or(p.seed);
    if let Some(l) = b.lambda {
        if !(0.0..=1.0).contains(&l) {
            return Err(ApiError::field("lambda", format!("{l} outside [0, 1]")));
        }
        p.lambda = l;
    }
    let model = s.model_for(b.checkpoint.as_deref())?;
    let eval_set = load_dataset_field(&cfg, "data.eval")?;
    let conditions = match cfg.data.conditions {
        Some(_) => load_dataset_field(&cfg, "data.conditions")?,
        None => eval_set.clone(),
    };
    let job = new_job(&s, JobKind::Evaluate)?;
    let (id, dir) = (job.id.clone(), job.dir.clone());
    s.jobs.insert(job);
    spawn_job(&s, id.clone(), move |_, _| {
        ops::run_evaluation(&model, &cfg, &eval_set, &conditions, &dir)?;
        Ok(vec![dir.join("report.json"), dir.join("report.txt")])
    });
    Ok(Json(s.jobs.get(&id).expect("job inserted")))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointInfo {
    pub path: PathBuf,
    pub step: usize,
    pub digest: String,
    pub served: bool,
}

/// Checkpoint directories under `root`, at most `depth` levels down.
fn find_checkpoints(root: &Path, depth: usize, out: &mut Vec<PathBuf>) {
    if root.join(MANIFEST_FILE).is_file() {
        out.push(root.to_path_buf());
        return;
    }
    if depth == 0 {
        return;
    }
    let Ok(entries) = fs::read_dir(root) else { return };
    let mut dirs: Vec<PathBuf> = entries.flatten().map(|e| e.path()).filter(|p| p.is_dir()).collect();
    dirs.sort();
    for d in dirs {
        find_checkpoints(&d, depth - 1, out);
    }
}

async fn checkpoints(State(s): State<AppState>) -> ApiResult<Vec<CheckpointInfo>> {
    let mut dirs = vec![s.checkpoint.clone()];
    for sub in ["runs", "jobs"] {
        find_checkpoints(&s.home.join(sub), 3, &mut dirs);
    }
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for d in dirs {
        let canon = fs::canonicalize(&d).unwrap_or(d);
        if !seen.insert(canon.clone()) {
            continue;
        }
        if let Ok(m) = read_manifest(&canon) {
            let served = canon == s.checkpoint;
            out.push(CheckpointInfo { path: canon, step: m.step, digest: m.digest, served });
        }
    }
    Ok(Json(out))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetInfo {
    pub field: String,
    pub path: PathBuf,
    pub records: Option<usize>,
    pub error: Option<String>,
}

async fn datasets(State(s): State<AppState>) -> Json<Vec<DatasetInfo>> {
    let d = &s.cfg.data;
    let fields = [("data.train", &d.train), ("data.eval", &d.eval), ("data.conditions", &d.conditions), ("data.finetune", &d.finetune)];
    let out = fields
        .into_iter()
        .filter_map(|(field, p)| p.as_ref().map(|p| (field, p)))
        .map(|(field, path)| {
            let (records, error) = match ops::load_records(path) {
                Ok(r) => (Some(r.len()), None),
                Err(e) => (None, Some(format!("{e:#}"))),
            };
            DatasetInfo { field: field.into(), path: path.clone(), records, error }
        })
        .collect();
    Json(out)
}
