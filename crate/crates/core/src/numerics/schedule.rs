//! Cosine annealing learning-rate schedule.

use crate::error::{Error, Result};

/// `lr0 · 0.5 · (1 + cos(π · step / total_steps))`.
///
/// Decays from `lr0` at step 0 to 0 at `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, lr0: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::Range("lr_at: total_steps must be > 0".into()));
    }
    if step > total_steps {
        return Err(Error::Range(format!(
            "lr_at: step {step} exceeds total_steps {total_steps}"
        )));
    }
    let frac = step as f64 / total_steps as f64;
    Ok(lr0 * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos()))
}
