use super::config::OneCycle;
use crate::error::{LmptError, Result};

fn cosine(start: f64, end: f64, pct: f64) -> f64 {
    if pct <= 0.0 {
        start
    } else if pct >= 1.0 {
        end
    } else {
        end + (start - end) / 2.0 * (1.0 + (std::f64::consts::PI * pct).cos())
    }
}

/// Step at which the schedule reaches its peak.
pub fn warmup_end(total_steps: usize, cfg: &OneCycle) -> usize {
    ((cfg.warmup_pct * (total_steps.saturating_sub(1)) as f64).round() as usize).max(1).min(total_steps.saturating_sub(1))
}

/// One-cycle learning rate: cosine ramp from `peak/div` up to `peak` at the
/// warmup boundary, then cosine decay to `peak/(div·final_div)` at the last
/// step. A one-step schedule runs at the peak.
pub fn one_cycle_lr(step: usize, total_steps: usize, peak: f64, cfg: &OneCycle) -> Result<f64> {
    if step >= total_steps {
        return Err(LmptError::Range(format!("step {step} outside schedule of {total_steps} steps")));
    }
    if total_steps == 1 {
        return Ok(peak);
    }
    let initial = peak / cfg.div_factor;
    let last = initial / cfg.final_div_factor;
    let w = warmup_end(total_steps, cfg);
    Ok(if step <= w {
        cosine(initial, peak, step as f64 / w as f64)
    } else {
        cosine(peak, last, (step - w) as f64 / (total_steps - 1 - w) as f64)
    })
}
