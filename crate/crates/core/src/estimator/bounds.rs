use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimator::{OrderDistribution, TransitionLattice};
use crate::policy::{Policy, SequenceState};
use crate::vocab::TokenId;

/// Log-space slack for rounding when comparing the ratio against its bounds.
pub const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Holds,
    BelowLower,
    AboveUpper,
    /// A target probability is zero (`eps = 1`); the ratio is undefined and was not checked.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub k: usize,
    pub vocab_size: usize,
    pub order: OrderDistribution,
    pub p_exact: f64,
    pub p_hat: f64,
    pub log_ratio: f64,
    pub ratio: f64,
    pub eps_parent: f64,
    pub eps_path: f64,
    pub eps: f64,
    /// `(1 - eps)^k`
    pub lower_bound: f64,
    /// `exp(k eps / (1 - eps))`
    pub upper_bound: f64,
    pub status: BoundStatus,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.status == BoundStatus::Holds
    }

    /// `k eps / (1 - eps)`, the log of the upper bound.
    pub fn log_upper(&self) -> f64 {
        self.k as f64 * self.eps / (1.0 - self.eps)
    }
}

/// Builds the report from a precomputed lattice.
pub fn report_from_lattice(lattice: &TransitionLattice, order: OrderDistribution, vocab_size: usize) -> BoundReport {
    let k = lattice.k();
    let gap = lattice.confidence_gap();
    let log_hat = lattice.log_single_pass();
    let log_exact = lattice.log_exact(order);
    let eps = gap.eps;
    let kf = k as f64;
    let degenerate = eps >= 1.0 || !log_hat.is_finite() || !log_exact.is_finite();
    let (log_ratio, lower_bound, upper_bound, status) = if degenerate {
        (f64::NAN, 0.0, f64::INFINITY, BoundStatus::Degenerate)
    } else {
        let log_ratio = log_exact - log_hat;
        let log_lower = kf * (1.0 - eps).ln();
        let log_upper = kf * eps / (1.0 - eps);
        let status = if log_ratio < log_lower - BOUND_SLACK {
            BoundStatus::BelowLower
        } else if log_ratio > log_upper + BOUND_SLACK {
            BoundStatus::AboveUpper
        } else {
            BoundStatus::Holds
        };
        (log_ratio, log_lower.exp(), log_upper.exp(), status)
    };
    BoundReport {
        k,
        vocab_size,
        order,
        p_exact: log_exact.exp(),
        p_hat: log_hat.exp(),
        log_ratio,
        ratio: log_ratio.exp(),
        eps_parent: gap.eps_parent,
        eps_path: gap.eps_path,
        eps,
        lower_bound,
        upper_bound,
        status,
    }
}

/// Compares the exact transition probability with the single-pass estimate against
/// `(1 - eps)^k <= P / P_hat <= exp(k eps / (1 - eps))`.
pub fn check_bounds<P: Policy + ?Sized>(
    policy: &P,
    parent: &SequenceState,
    positions: &[usize],
    tokens: &[TokenId],
    order: OrderDistribution,
    cap: usize,
) -> Result<BoundReport> {
    let lattice = TransitionLattice::build(policy, parent, positions, tokens, cap)?;
    Ok(report_from_lattice(&lattice, order, policy.vocab_size()))
}
