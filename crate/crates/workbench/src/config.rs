use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use planforge_core::denoiser::{ModelConfig, TrainConfig};
use planforge_core::diffusion::ScheduleConfig;
use planforge_core::metrics::Protocol;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Dataset files, relative paths resolved against the config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub eval: Option<PathBuf>,
    /// Records whose conditions drive the diversity score; defaults to `eval`.
    pub conditions: Option<PathBuf>,
    pub finetune: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub checkpoint: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { host: "127.0.0.1".into(), port: 8080, checkpoint: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkbenchConfig {
    pub data: DataConfig,
    pub schedule: ScheduleConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: Protocol,
    pub service: ServiceConfig,
}

/// The full-scale protocol preset: every constant with a published value, desk-scale
/// defaults elsewhere.
pub const PUBLISHED_PROTOCOL: &str = include_str!("../presets/published-protocol.toml");

impl WorkbenchConfig {
    /// Reads `path` (defaults when `None`), applies `key=value` overrides with dotted keys
    /// and resolves relative data paths against the file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let (mut table, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let table: toml::Table =
                    toml::from_str(&text).map_err(|e| anyhow!("{}: {}", p.display(), e.message()))?;
                (table, p.parent().map(Path::to_path_buf))
            }
            None => (toml::Table::new(), None),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg = Self::from_table(table)?;
        if let Some(base) = base {
            cfg.resolve_paths(&base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        let de = toml::Value::Table(table);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow!("config field `{path}`: {}", e.into_inner().message())
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let d = &mut self.data;
        for p in [&mut d.train, &mut d.eval, &mut d.conditions, &mut d.finetune, &mut self.service.checkpoint]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sched = self.schedule.build().context("config field `schedule`")?;
        self.model.validate(Some(sched.steps())).context("config field `model`")?;
        self.train.validate().context("config field `train`")?;
        self.eval.extractor.validate().context("config field `eval.extractor`")?;
        if !(0.0..=1.0).contains(&self.eval.lambda) {
            bail!("config field `eval.lambda`: {} outside [0, 1]", self.eval.lambda);
        }
        Ok(())
    }

    /// Path of a required dataset, failing with the field name when unset or missing.
    pub fn dataset(&self, field: &str) -> Result<PathBuf> {
        let value = match field {
            "data.train" => &self.data.train,
            "data.eval" => &self.data.eval,
            "data.conditions" => &self.data.conditions,
            "data.finetune" => &self.data.finetune,
            other => bail!("unknown dataset field `{other}`"),
        };
        let path = value.clone().ok_or_else(|| anyhow!("config field `{field}` is not set"))?;
        if !path.is_file() {
            bail!("config field `{field}`: dataset {} does not exist", path.display());
        }
        Ok(path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

/// SHA-256 of a model configuration's JSON form.
pub fn model_config_digest(cfg: &ModelConfig) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(cfg).expect("config serializes")))
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `a.b.c=value` inside `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| anyhow!("override `{spec}` is not key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override `{spec}` has an empty key segment");
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override `{spec}`: `{part}` is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_published_constants() {
        let c = WorkbenchConfig::default();
        assert_eq!(c.schedule.steps, 1000);
        assert_eq!(c.model.discrete_threshold, 32);
        assert_eq!(c.train.p_drop_boundary, 0.1);
        assert_eq!((c.train.lr_start, c.train.lr_end), (1e-3, 1e-5));
        assert_eq!((c.eval.sample_count, c.eval.ds_conditions, c.eval.ds_samples), (512, 4, 100));
    }

    #[test]
    fn overrides_use_dotted_keys() {
        let c = WorkbenchConfig::load(None, &["train.steps=25".into(), "model.d_model=32".into()]).unwrap();
        assert_eq!(c.train.steps, 25);
        assert_eq!(c.model.d_model, 32);
    }

    #[test]
    fn bad_fields_are_named() {
        let err = WorkbenchConfig::load(None, &["train.steps=\"many\"".into()]).unwrap_err();
        assert!(err.to_string().contains("train.steps"), "{err}");
        let err = WorkbenchConfig::load(None, &["model.nonsense=1".into()]).unwrap_err();
        assert!(err.to_string().contains("model"), "{err}");
    }

    #[test]
    fn published_preset_parses() {
        let table: toml::Table = toml::from_str(PUBLISHED_PROTOCOL).unwrap();
        let c = WorkbenchConfig::from_table(table).unwrap();
        c.validate().unwrap();
        assert_eq!(c.train.steps, 400_000);
        assert_eq!(c.schedule.steps, 1000);
    }
}
