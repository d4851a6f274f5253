use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Temperature and weight schedules for the self-distillation term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub tau_max: f64,
    /// Exponent of the temperature decay, in `(0, 1]`.
    pub sched_beta: f64,
    pub lambda_max: f64,
    /// Growth rate of the weight ramp.
    pub gamma: f64,
    /// Total training steps `T`.
    pub total_steps: usize,
    /// Evaluate both schedules at `T - t`.
    pub reverse: bool,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { tau_max: 2.0, sched_beta: 0.7, lambda_max: 3e-3, gamma: 3.0, total_steps: 300, reverse: false }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_max > 0.0 && self.tau_max.is_finite()) {
            return Err(Error::config(format!("tau_max must be positive, got {}", self.tau_max)));
        }
        if !(self.sched_beta > 0.0 && self.sched_beta <= 1.0) {
            return Err(Error::config(format!("sched_beta must lie in (0, 1], got {}", self.sched_beta)));
        }
        if !(self.lambda_max >= 0.0 && self.lambda_max.is_finite()) {
            return Err(Error::config(format!("lambda_max must be non-negative, got {}", self.lambda_max)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.total_steps == 0 {
            return Err(Error::config("total_steps must be at least 1"));
        }
        Ok(())
    }

    /// Training-time argument after clamping to `[0, T]` and applying reverse mode.
    fn effective_t(&self, t: f64) -> f64 {
        let big_t = self.total_steps as f64;
        let clamped = if t > big_t {
            log::warn!("schedule step {t} exceeds T = {big_t}; clamping");
            big_t
        } else if t < 0.0 || t.is_nan() {
            log::warn!("schedule step {t} below 0; clamping");
            0.0
        } else {
            t
        };
        if self.reverse {
            big_t - clamped
        } else {
            clamped
        }
    }
}

/// `tau_max * (1 - t/T)^sched_beta`
pub fn tau_schedule(t: f64, cfg: &ScheduleConfig) -> f64 {
    let t = cfg.effective_t(t);
    cfg.tau_max * (1.0 - t / cfg.total_steps as f64).powf(cfg.sched_beta)
}

/// `lambda_max * (exp(gamma t/T) - 1) / (exp(gamma) - 1)`
pub fn lambda_schedule(t: f64, cfg: &ScheduleConfig) -> f64 {
    let t = cfg.effective_t(t);
    cfg.lambda_max * ((cfg.gamma * t / cfg.total_steps as f64).exp_m1() / cfg.gamma.exp_m1())
}
