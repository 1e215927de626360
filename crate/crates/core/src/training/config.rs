use serde::{Deserialize, Serialize};

use super::augment::AugmentConfig;
use crate::error::{LmptError, Result};

/// One-cycle schedule shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OneCycle {
    pub warmup_pct: f64,
    pub div_factor: f64,
    pub final_div_factor: f64,
}

impl Default for OneCycle {
    fn default() -> Self {
        Self { warmup_pct: 0.3, div_factor: 25.0, final_div_factor: 1e4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub schedule: OneCycle,
    pub augment: AugmentConfig,
    /// Points per training cloud.
    pub num_points: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 4,
            peak_lr: 3e-4,
            weight_decay: 0.01,
            betas: (0.9, 0.999),
            eps: 1e-8,
            schedule: OneCycle::default(),
            augment: AugmentConfig::default(),
            num_points: 2048,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// A peak rate of exactly 0 is accepted and freezes the parameters.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(LmptError::Config(m));
        if self.epochs == 0 {
            return err("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return err("batch_size must be at least 1".into());
        }
        if !(self.peak_lr >= 0.0 && self.peak_lr.is_finite()) {
            return err(format!("peak_lr must be a non-negative number, got {}", self.peak_lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return err(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return err(format!("betas must lie in [0, 1), got ({b1}, {b2})"));
        }
        if !(self.eps > 0.0) {
            return err(format!("eps must be positive, got {}", self.eps));
        }
        let s = &self.schedule;
        if !(s.warmup_pct > 0.0 && s.warmup_pct < 1.0) {
            return err(format!("warmup_pct must lie in (0, 1), got {}", s.warmup_pct));
        }
        if !(s.div_factor >= 1.0 && s.final_div_factor >= 1.0) {
            return err("div_factor and final_div_factor must be at least 1".into());
        }
        if self.num_points == 0 {
            return err("num_points must be positive".into());
        }
        self.augment.validate()
    }
}
