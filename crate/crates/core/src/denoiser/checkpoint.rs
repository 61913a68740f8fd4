use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::DenoiserModel;
use super::params::Params;
use super::ModelConfig;
use crate::{rng, Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FORMAT: &str = "planforge-checkpoint-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub shape: [usize; 2],
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub config: ModelConfig,
    pub step: usize,
    pub tensors: Vec<TensorEntry>,
    /// Hash over the tensor names and blob digests, in table order.
    pub digest: String,
}

fn tensor_bytes(t: &ndarray::Array2<f64>) -> Vec<u8> {
    t.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

fn combined_digest(entries: &[TensorEntry]) -> String {
    let mut h = Sha256::new();
    for e in entries {
        h.update(e.name.as_bytes());
        h.update([0]);
        h.update(e.sha256.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Digest identifying a model's parameters (the manifest `digest` of its checkpoint).
pub fn parameter_digest(model: &DenoiserModel) -> String {
    combined_digest(&manifest_entries(&model.params).0)
}

fn manifest_entries(params: &Params) -> (Vec<TensorEntry>, Vec<Vec<u8>>) {
    params
        .tensors()
        .into_iter()
        .map(|(name, t)| {
            let bytes = tensor_bytes(t);
            let entry = TensorEntry {
                file: format!("{name}.f32"),
                shape: [t.nrows(), t.ncols()],
                sha256: hex::encode(Sha256::digest(&bytes)),
                name,
            };
            (entry, bytes)
        })
        .unzip()
}

/// Writes `dir/manifest.json` plus one little-endian f32 blob per tensor.
pub fn save_checkpoint(model: &DenoiserModel, dir: &Path) -> Result<CheckpointManifest> {
    if !model.params.is_finite() {
        return Err(Error::NumericFailure("refusing to save non-finite parameters".into()));
    }
    fs::create_dir_all(dir)?;
    let (tensors, blobs) = manifest_entries(&model.params);
    for (e, bytes) in tensors.iter().zip(&blobs) {
        fs::write(dir.join(&e.file), bytes)?;
    }
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.into(),
        config: model.config.clone(),
        step: model.step,
        digest: combined_digest(&tensors),
        tensors,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read(&path)?;
    let m: CheckpointManifest = serde_json::from_slice(&text)
        .map_err(|e| corruption(&path, format!("unreadable manifest: {e}")))?;
    if m.format != CHECKPOINT_FORMAT {
        return Err(corruption(&path, format!("unknown format `{}`", m.format)));
    }
    Ok(m)
}

fn corruption(path: &Path, reason: impl Into<String>) -> Error {
    Error::Corruption { path: PathBuf::from(path), reason: reason.into() }
}

/// Loads a checkpoint, verifying every blob against the manifest.
pub fn load_checkpoint(dir: &Path) -> Result<DenoiserModel> {
    let m = read_manifest(dir)?;
    m.config.validate(None)?;
    let mut params = Params::init(&m.config, &mut rng::stream(0, rng::STREAM_INIT));
    let mut slots = params.tensors_mut();
    if slots.len() != m.tensors.len() {
        return Err(corruption(
            &dir.join(MANIFEST_FILE),
            format!("{} tensors listed, configuration needs {}", m.tensors.len(), slots.len()),
        ));
    }
    for ((name, t), e) in slots.iter_mut().zip(&m.tensors) {
        let path = dir.join(&e.file);
        if *name != e.name || e.shape != [t.nrows(), t.ncols()] {
            return Err(corruption(&path, format!("tensor table entry `{}` does not match `{name}`", e.name)));
        }
        let bytes = fs::read(&path).map_err(|err| corruption(&path, format!("unreadable blob: {err}")))?;
        if bytes.len() != t.len() * 4 {
            return Err(corruption(&path, format!("expected {} bytes, found {}", t.len() * 4, bytes.len())));
        }
        if hex::encode(Sha256::digest(&bytes)) != e.sha256 {
            return Err(corruption(&path, "digest mismatch"));
        }
        for (v, chunk) in t.iter_mut().zip(bytes.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk")) as f64;
        }
    }
    drop(slots);
    if combined_digest(&m.tensors) != m.digest {
        return Err(corruption(&dir.join(MANIFEST_FILE), "manifest digest mismatch"));
    }
    if !params.is_finite() {
        return Err(corruption(dir, "non-finite parameters"));
    }
    Ok(DenoiserModel { config: m.config, params, step: m.step })
}

/// [`load_checkpoint`] that also requires the stored configuration to equal `expected`.
pub fn load_checkpoint_expecting(dir: &Path, expected: &ModelConfig) -> Result<DenoiserModel> {
    let m = read_manifest(dir)?;
    if &m.config != expected {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint at {} was trained with {:?}, expected {:?}",
            dir.display(),
            m.config,
            expected
        )));
    }
    load_checkpoint(dir)
}
