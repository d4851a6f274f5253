use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::{train, MetricsRecord, TrainConfig, TrainMode};

/// Share of steps, from the end, averaged for final-phase statistics.
pub const FINAL_FRACTION: f64 = 0.1;
/// Share of steps, from the start, over which the early reward slope is fitted.
pub const EARLY_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub base: TrainConfig,
    pub modes: Vec<TrainMode>,
    pub seeds: Vec<u64>,
}

/// Phase statistics of one metrics stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub final_reward: f64,
    pub final_entropy: f64,
    /// Least-squares slope of mean tree reward against step over the early phase.
    pub early_slope: f64,
}

impl PhaseSummary {
    pub fn from_metrics(metrics: &[MetricsRecord]) -> Result<Self> {
        if metrics.is_empty() {
            return Err(Error::invalid("phase summary of an empty metrics stream"));
        }
        let n = metrics.len();
        let tail = ((n as f64 * FINAL_FRACTION).ceil() as usize).clamp(1, n);
        let last = &metrics[n - tail..];
        let head = ((n as f64 * EARLY_FRACTION).ceil() as usize).clamp(2.min(n), n);
        let early: Vec<(f64, f64)> = metrics[..head].iter().map(|m| (m.step as f64, m.mean_tree_reward)).collect();
        Ok(Self {
            final_reward: mean(last.iter().map(|m| m.mean_tree_reward)),
            final_entropy: mean(last.iter().map(|m| m.masked_entropy)),
            early_slope: slope(&early),
        })
    }
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len();
    xs.sum::<f64>() / n as f64
}

/// Ordinary least-squares slope; 0 for fewer than two distinct x values.
pub fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 0.0;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRun {
    pub mode: TrainMode,
    pub seed: u64,
    pub summary: PhaseSummary,
    pub metrics: Vec<MetricsRecord>,
}

/// Per-mode means over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub mode: TrainMode,
    pub seeds: usize,
    pub final_reward: f64,
    pub final_entropy: f64,
    pub early_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub runs: Vec<ArmRun>,
    pub arms: Vec<ArmSummary>,
}

impl AblationReport {
    pub fn arm(&self, mode: TrainMode) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.mode == mode)
    }

    /// Fixed-width comparison table, one row per arm.
    pub fn table(&self) -> String {
        let mut out = format!("{:<18} {:>6} {:>13} {:>14} {:>12}\n", "mode", "seeds", "final_reward", "final_entropy", "early_slope");
        for a in &self.arms {
            out += &format!(
                "{:<18} {:>6} {:>13.4} {:>14.4} {:>12.6}\n",
                a.mode.name(),
                a.seeds,
                a.final_reward,
                a.final_entropy,
                a.early_slope
            );
        }
        out
    }
}

/// Trains every mode under every seed with otherwise identical configuration.
///
/// With an output directory set on the base config, each run writes to
/// `<out_dir>/<mode>/seed_<seed>`.
pub fn ablate(cfg: &AblationConfig) -> Result<AblationReport> {
    if cfg.modes.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::config("ablation needs at least one mode and one seed"));
    }
    cfg.base.validate()?;
    let mut runs = Vec::new();
    for &mode in &cfg.modes {
        for &seed in &cfg.seeds {
            let mut run_cfg = cfg.base.clone();
            run_cfg.mode = mode;
            run_cfg.seed = seed;
            run_cfg.out_dir = cfg.base.out_dir.as_ref().map(|d| d.join(mode.name()).join(format!("seed_{seed}")));
            log::info!("ablation arm {mode}, seed {seed}");
            let outcome = train(&run_cfg)?;
            let summary = PhaseSummary::from_metrics(&outcome.metrics)?;
            runs.push(ArmRun { mode, seed, summary, metrics: outcome.metrics });
        }
    }
    let arms = cfg
        .modes
        .iter()
        .map(|&mode| {
            let mine: Vec<&PhaseSummary> = runs.iter().filter(|r| r.mode == mode).map(|r| &r.summary).collect();
            ArmSummary {
                mode,
                seeds: mine.len(),
                final_reward: mean(mine.iter().map(|s| s.final_reward)),
                final_entropy: mean(mine.iter().map(|s| s.final_entropy)),
                early_slope: mean(mine.iter().map(|s| s.early_slope)),
            }
        })
        .collect();
    Ok(AblationReport { runs, arms })
}
