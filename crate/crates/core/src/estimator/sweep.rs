use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::bounds::report_from_lattice;
use crate::estimator::{OrderDistribution, Transition, TransitionLattice};
use crate::policy::{Policy, Sharpened};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub temperature: f64,
    pub mean_abs_log_ratio: f64,
    pub mean_eps: f64,
    /// Instances skipped because a target probability underflowed to zero.
    pub degenerate: usize,
    pub violations: usize,
}

/// Re-runs the bound statistics with logits divided by each temperature.
pub fn sharpening_sweep<P: Policy + ?Sized>(
    policy: &P,
    instances: &[Transition],
    temperatures: &[f64],
    order: OrderDistribution,
    cap: usize,
) -> Result<Vec<SweepRow>> {
    if temperatures.is_empty() || temperatures.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config("sweep temperatures must be nonempty and strictly descending"));
    }
    if instances.is_empty() {
        return Err(Error::config("sweep needs at least one instance"));
    }
    let mut rows = Vec::with_capacity(temperatures.len());
    for &t in temperatures {
        let sharp = Sharpened::new(policy, t)?;
        let mut err_sum = 0.0;
        let mut eps_sum = 0.0;
        let mut n = 0usize;
        let mut degenerate = 0;
        let mut violations = 0;
        for inst in instances {
            let lattice = TransitionLattice::build(&sharp, &inst.parent, &inst.positions, &inst.tokens, cap)?;
            let r = report_from_lattice(&lattice, order, sharp.vocab_size());
            if r.status == crate::estimator::BoundStatus::Degenerate {
                degenerate += 1;
                continue;
            }
            if !r.holds() {
                violations += 1;
            }
            err_sum += r.log_ratio.abs();
            eps_sum += r.eps;
            n += 1;
        }
        let denom = n.max(1) as f64;
        rows.push(SweepRow {
            temperature: t,
            mean_abs_log_ratio: err_sum / denom,
            mean_eps: eps_sum / denom,
            degenerate,
            violations,
        });
    }
    Ok(rows)
}
