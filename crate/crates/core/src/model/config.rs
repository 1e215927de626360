use serde::{Deserialize, Serialize};

use crate::error::{LmptError, Result};

/// How attention neighborhoods are formed at each level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    /// Exact k nearest neighbors.
    #[default]
    Knn,
    /// Windows of k consecutive points along the Z-order curve.
    Serialized,
}

fn default_bits() -> u32 {
    10
}

fn default_true() -> bool {
    true
}

/// Network shape. Stage `s` pools with `pool_cells[s]`, runs `blocks[s]`
/// attention blocks of width `channels[s]` over `neighbors[s]`-point windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub blocks: Vec<usize>,
    pub neighbors: Vec<usize>,
    pub channels: Vec<usize>,
    pub pool_cells: Vec<f64>,
    pub num_classes: usize,
    pub num_conditions: usize,
    #[serde(default)]
    pub attention_mode: AttentionMode,
    #[serde(default = "default_bits")]
    pub serialize_bits: u32,
    /// When false the bottleneck is never modulated and no FiLM parameters
    /// exist.
    #[serde(default = "default_true")]
    pub film: bool,
}

impl ModelConfig {
    /// Three stages, widths 32/64/128.
    pub fn desk(num_classes: usize, num_conditions: usize) -> Self {
        Self {
            blocks: vec![2, 2, 2],
            neighbors: vec![8, 12, 16],
            channels: vec![32, 64, 128],
            pool_cells: vec![0.06, 0.15, 0.4],
            num_classes,
            num_conditions,
            attention_mode: AttentionMode::Knn,
            serialize_bits: default_bits(),
            film: true,
        }
    }

    /// Two single-block stages of widths 8/16 with k = 4; sized for gradient
    /// checks on ~32-point clouds.
    pub fn tiny(num_classes: usize, num_conditions: usize) -> Self {
        Self {
            blocks: vec![1, 1],
            neighbors: vec![4, 4],
            channels: vec![8, 16],
            pool_cells: vec![0.3, 0.8],
            num_classes,
            num_conditions,
            attention_mode: AttentionMode::Knn,
            serialize_bits: default_bits(),
            film: true,
        }
    }

    pub fn stages(&self) -> usize {
        self.blocks.len()
    }

    pub fn bottleneck_width(&self) -> usize {
        *self.channels.last().expect("validated config has a stage")
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.blocks.len();
        let err = |m: String| Err(LmptError::Config(m));
        if s == 0 {
            return err("model needs at least one stage".into());
        }
        for (name, len) in [
            ("neighbors", self.neighbors.len()),
            ("channels", self.channels.len()),
            ("pool_cells", self.pool_cells.len()),
        ] {
            if len != s {
                return err(format!("{name} has {len} entries, blocks has {s}"));
            }
        }
        if self.blocks.contains(&0) {
            return err("every stage needs at least one block".into());
        }
        if self.neighbors.contains(&0) {
            return err("neighbors must be at least 1".into());
        }
        if self.channels.contains(&0) {
            return err("channels must be positive".into());
        }
        if self.channels.windows(2).any(|w| w[1] < w[0]) {
            return err(format!("channels must be non-decreasing, got {:?}", self.channels));
        }
        if self.pool_cells.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return err(format!("pool cells must be positive, got {:?}", self.pool_cells));
        }
        if self.num_classes == 0 {
            return err("num_classes must be at least 1".into());
        }
        if self.num_conditions == 0 {
            return err("num_conditions must be at least 1".into());
        }
        if !(1..=crate::geometry::MAX_BITS).contains(&self.serialize_bits) {
            return err(format!("serialize_bits must be in 1..=21, got {}", self.serialize_bits));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        ModelConfig::desk(11, 2).validate().unwrap();
        ModelConfig::tiny(3, 1).validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let base = ModelConfig::tiny(3, 1);
        let mut c = base.clone();
        c.channels = vec![16, 8];
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.blocks = vec![1, 0];
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.num_classes = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.neighbors.pop();
        assert!(c.validate().is_err());
        let mut c = base;
        c.blocks.clear();
        c.neighbors.clear();
        c.channels.clear();
        c.pool_cells.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_defaults_fill_optional_fields() {
        let c: ModelConfig = serde_json::from_str(
            r#"{"blocks":[1],"neighbors":[4],"channels":[8],"pool_cells":[0.2],"num_classes":2,"num_conditions":1}"#,
        )
        .unwrap();
        assert_eq!(c.attention_mode, AttentionMode::Knn);
        assert!(c.film);
        assert_eq!(c.serialize_bits, 10);
    }
}
