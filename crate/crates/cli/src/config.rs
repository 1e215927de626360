use std::path::{Path, PathBuf};

use lmpt::dataio::LabelRegistry;
use lmpt::eval::EvalConfig;
use lmpt::model::{AttentionMode, ModelConfig};
use lmpt::training::TrainConfig;
use lmpt::{LmptError, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Tiny,
    #[default]
    Desk,
}

/// Model shape as written in a run config. Class and condition counts come
/// from the registry; any field left out keeps the preset's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub preset: Preset,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neighbors: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool_cells: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention_mode: Option<AttentionMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub serialize_bits: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub film: Option<bool>,
}

impl ModelSection {
    pub fn resolve(&self, registry: &LabelRegistry) -> Result<ModelConfig> {
        let (c, k) = (registry.num_classes(), registry.num_conditions());
        let mut m = match self.preset {
            Preset::Tiny => ModelConfig::tiny(c, k),
            Preset::Desk => ModelConfig::desk(c, k),
        };
        if let Some(v) = &self.blocks {
            m.blocks = v.clone();
        }
        if let Some(v) = &self.neighbors {
            m.neighbors = v.clone();
        }
        if let Some(v) = &self.channels {
            m.channels = v.clone();
        }
        if let Some(v) = &self.pool_cells {
            m.pool_cells = v.clone();
        }
        if let Some(v) = self.attention_mode {
            m.attention_mode = v;
        }
        if let Some(v) = self.serialize_bits {
            m.serialize_bits = v;
        }
        if let Some(v) = self.film {
            m.film = v;
        }
        m.validate()?;
        Ok(m)
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("run")
}

/// Everything one training run needs. Relative paths resolve against the
/// config file's directory. `seed` replaces `train.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub registry: PathBuf,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

/// Sets `key` (dot-separated path) in a JSON object. The value is parsed as
/// JSON when possible, otherwise taken as a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| LmptError::Config(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(LmptError::Config(format!("override key {key:?} has an empty component")));
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| LmptError::Config(format!("override {key}: {part} is not inside an object")))?;
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| LmptError::Config(format!("override {key}: parent is not an object")))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Reads the file, applies overrides, and resolves relative paths.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LmptError::Config(format!("config {}: {e}", path.display())))?;
        let mut value: Value = serde_json::from_str(&text)
            .map_err(|e| LmptError::Config(format!("config {}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| LmptError::Config(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.manifest, &mut cfg.registry, &mut cfg.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.manifest.is_file() {
            return Err(LmptError::Config(format!("manifest {} does not exist", self.manifest.display())));
        }
        if !self.registry.is_file() {
            return Err(LmptError::Config(format!("registry {} does not exist", self.registry.display())));
        }
        self.train.validate()?;
        self.train.augment.validate()?;
        self.eval.validate()
    }

    /// CRC32 of the canonical JSON form, as 8 hex digits.
    pub fn hash(&self) -> String {
        config_hash(&serde_json::to_string(self).expect("config serializes"))
    }
}

pub fn config_hash(canonical: &str) -> String {
    format!("{:08x}", crc32fast::hash(canonical.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_create_nested_keys() {
        let mut v = json!({"train": {"epochs": 5}});
        apply_override(&mut v, "train.epochs=1").unwrap();
        apply_override(&mut v, "model.channels=[8,16]").unwrap();
        apply_override(&mut v, "model.preset=tiny").unwrap();
        assert_eq!(v, json!({"train": {"epochs": 1}, "model": {"channels": [8, 16], "preset": "tiny"}}));
    }

    #[test]
    fn malformed_override_is_config_error() {
        let mut v = json!({});
        assert!(matches!(apply_override(&mut v, "epochs"), Err(LmptError::Config(_))));
        assert!(matches!(apply_override(&mut v, "train..epochs=1"), Err(LmptError::Config(_))));
    }

    #[test]
    fn model_section_overrides_preset() {
        let reg = lmpt::dataio::build_registry(&[("a".into(), vec!["P".into(), "Q".into()])], &[]).unwrap();
        let s = ModelSection { preset: Preset::Tiny, channels: Some(vec![4, 8]), film: Some(false), ..Default::default() };
        let m = s.resolve(&reg).unwrap();
        assert_eq!(m.channels, vec![4, 8]);
        assert_eq!(m.neighbors, vec![4, 4]);
        assert_eq!((m.num_classes, m.num_conditions, m.film), (2, 1, false));
    }

    #[test]
    fn unknown_field_is_named() {
        let err = serde_json::from_value::<RunConfig>(json!({"manifest": "m", "registry": "r", "train": {"epoch": 1}}))
            .unwrap_err()
            .to_string();
        assert!(err.contains("epoch"), "{err}");
    }
}
