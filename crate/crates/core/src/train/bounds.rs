use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{random_instance, report_from_lattice, BoundReport, BoundStatus, OrderDistribution, TransitionLattice};
use crate::policy::Policy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsConfig {
    pub instances: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub vocab_min: usize,
    pub vocab_max: usize,
    pub seed: u64,
    pub cap: usize,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { instances: 1000, k_min: 2, k_max: 5, vocab_min: 3, vocab_max: 6, seed: 0, cap: crate::estimator::DEFAULT_ENUMERATION_CAP }
    }
}

impl BoundsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.instances == 0 {
            return Err(Error::config("bound verification needs at least one instance"));
        }
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(Error::config(format!("invalid k range {}..={}", self.k_min, self.k_max)));
        }
        if self.k_max > self.cap {
            return Err(Error::config(format!("k up to {} exceeds the enumeration cap {}", self.k_max, self.cap)));
        }
        if self.vocab_min < 3 || self.vocab_min > self.vocab_max {
            return Err(Error::config(format!("invalid vocabulary range {}..={}", self.vocab_min, self.vocab_max)));
        }
        Ok(())
    }

    fn k_range(&self) -> RangeInclusive<usize> {
        self.k_min..=self.k_max
    }

    fn vocab_range(&self) -> RangeInclusive<usize> {
        self.vocab_min..=self.vocab_max
    }
}

/// One line of the verification stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub instance: usize,
    #[serde(flatten)]
    pub report: BoundReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsSummary {
    /// Reports checked, one per instance and order kind.
    pub count: usize,
    pub violations: usize,
    pub degenerate: usize,
    pub max_abs_log_ratio: f64,
    /// The report attaining `max_abs_log_ratio`.
    pub worst: Option<BoundRecord>,
}

impl BoundsSummary {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Draws random instances and checks the ratio bounds under every order kind.
///
/// One lattice serves all kinds of an instance. Each record goes to `sink` as soon as it
/// is computed.
pub fn verify_bounds<F: FnMut(&BoundRecord) -> Result<()>>(cfg: &BoundsConfig, mut sink: F) -> Result<BoundsSummary> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut summary = BoundsSummary { count: 0, violations: 0, degenerate: 0, max_abs_log_ratio: 0.0, worst: None };
    for instance in 0..cfg.instances {
        let k = rng.gen_range(cfg.k_range());
        let v = rng.gen_range(cfg.vocab_range());
        let (model, tr) = random_instance(&mut rng, k, v)?;
        let lattice = TransitionLattice::build(&model, &tr.parent, &tr.positions, &tr.tokens, cfg.cap)?;
        for order in OrderDistribution::all() {
            let record = BoundRecord { instance, report: report_from_lattice(&lattice, order, model.vocab_size()) };
            summary.count += 1;
            match record.report.status {
                BoundStatus::Holds => {}
                BoundStatus::Degenerate => summary.degenerate += 1,
                BoundStatus::BelowLower | BoundStatus::AboveUpper => summary.violations += 1,
            }
            let abs = record.report.log_ratio.abs();
            if record.report.status != BoundStatus::Degenerate && (summary.worst.is_none() || abs > summary.max_abs_log_ratio) {
                summary.max_abs_log_ratio = abs;
                summary.worst = Some(record.clone());
            }
            sink(&record)?;
        }
    }
    Ok(summary)
}
