use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use anyhow::{bail, Result};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobKind {
    Train,
    FineTune,
    Evaluate,
}

/// Ordered so that a job can only move to a later status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub kind: JobKind,
    pub status: JobStatus,
    pub dir: PathBuf,
    pub artifacts: Vec<PathBuf>,
    pub created_at: DateTime<Utc>,
    pub started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
    pub error: Option<String>,
    /// Completed training steps, for polling.
    pub progress: Option<usize>,
    pub total_steps: Option<usize>,
}

impl JobRecord {
    pub fn new(id: String, kind: JobKind, dir: PathBuf) -> Self {
        Self {
            id,
            kind,
            status: JobStatus::Queued,
            dir,
            artifacts: Vec::new(),
            created_at: Utc::now(),
            started_at: None,
            finished_at: None,
            error: None,
            progress: None,
            total_steps: None,
        }
    }

    /// Moves to `next`, refusing backwards or repeated transitions out of a terminal state.
    pub fn advance(&mut self, next: JobStatus) -> Result<()> {
        if next <= self.status || self.status.is_terminal() {
            bail!("job {}: cannot move from {:?} to {:?}", self.id, self.status, next);
        }
        if next == JobStatus::Failed && self.status == JobStatus::Queued {
            self.started_at = Some(Utc::now());
        }
        match next {
            JobStatus::Running => self.started_at = Some(Utc::now()),
            JobStatus::Done | JobStatus::Failed => self.finished_at = Some(Utc::now()),
            JobStatus::Queued => {}
        }
        self.status = next;
        Ok(())
    }
}

/// Shared job table. Reads clone a snapshot.
#[derive(Debug, Clone, Default)]
pub struct JobStore {
    inner: Arc<RwLock<BTreeMap<String, JobRecord>>>,
    counter: Arc<std::sync::atomic::AtomicUsize>,
}

impl JobStore {
    pub fn next_id(&self) -> String {
        let n = self.counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1;
        format!("job-{n:04}")
    }

    pub fn insert(&self, job: JobRecord) {
        self.inner.write().expect("job table").insert(job.id.clone(), job);
    }

    /// Inserts a training job unless another one is still queued or running, which is returned.
    pub fn insert_training(&self, job: JobRecord) -> std::result::Result<(), JobRecord> {
        let mut table = self.inner.write().expect("job table");
        if let Some(active) = table.values().find(|j| j.kind != JobKind::Evaluate && !j.status.is_terminal()) {
            return Err(active.clone());
        }
        table.insert(job.id.clone(), job);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<JobRecord> {
        self.inner.read().expect("job table").get(id).cloned()
    }

    pub fn list(&self) -> Vec<JobRecord> {
        self.inner.read().expect("job table").values().cloned().collect()
    }

    pub fn update(&self, id: &str, f: impl FnOnce(&mut JobRecord) -> Result<()>) -> Result<()> {
        let mut table = self.inner.write().expect("job table");
        match table.get_mut(id) {
            Some(job) => f(job),
            None => bail!("unknown job {id}"),
        }
    }

    /// A train or fine-tune job that has not finished yet.
    pub fn active_training(&self) -> Option<JobRecord> {
        self.inner
            .read()
            .expect("job table")
            .values()
            .find(|j| j.kind != JobKind::Evaluate && !j.status.is_terminal())
            .cloned()
    }
}
