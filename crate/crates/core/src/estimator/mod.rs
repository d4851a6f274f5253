//! Transition-probability estimation for one tree step.
//!
//! A tree step reveals `k` positions of a parent state. The single-pass estimate reads the
//! `k` target probabilities off one forward pass on the parent. The exact transition
//! probability marginalizes over every revelation order: each order reveals one position at
//! a time, and every step is scored by a fresh forward pass on the partially revealed
//! context. Because a step's context depends only on the *set* of positions revealed so
//! far, the enumerator runs one forward pass per subset (`2^k`) and combines them with a
//! dynamic program over subsets instead of walking all `k!` orders.

mod bounds;
mod instances;
mod lattice;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{Policy, SequenceState};
use crate::vocab::TokenId;

pub use bounds::{check_bounds, report_from_lattice, BoundReport, BoundStatus, BOUND_SLACK};
pub use instances::random_instance;
pub use lattice::TransitionLattice;
pub use sweep::{sharpening_sweep, SweepRow};

/// Default limit on `k` for exhaustive enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 7;

/// Distribution over revelation orders of the `k` positions of a tree step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrderDistribution {
    /// Every order equally likely.
    UniformOrders,
    /// Point mass on the order that always reveals the most confident remaining position
    /// (lowest position on ties), re-ranked after every reveal.
    GreedyConfidence,
    /// Next position drawn with probability proportional to `exp(confidence / temperature)`
    /// among the remaining positions, re-ranked after every reveal.
    SoftmaxConfidence { temperature: f64 },
}

impl OrderDistribution {
    pub fn name(&self) -> &'static str {
        match self {
            OrderDistribution::UniformOrders => "uniform",
            OrderDistribution::GreedyConfidence => "greedy",
            OrderDistribution::SoftmaxConfidence { .. } => "softmax",
        }
    }

    /// The three kinds used by the certification harnesses.
    pub fn all() -> [OrderDistribution; 3] {
        [
            OrderDistribution::UniformOrders,
            OrderDistribution::GreedyConfidence,
            OrderDistribution::SoftmaxConfidence { temperature: 0.5 },
        ]
    }
}

/// One parent-to-child transition: the revealed positions and their tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub parent: SequenceState,
    pub positions: Vec<usize>,
    pub tokens: Vec<TokenId>,
}

impl Transition {
    pub fn new(parent: SequenceState, positions: Vec<usize>, tokens: Vec<TokenId>) -> Result<Self> {
        validate(&parent, &positions, &tokens)?;
        Ok(Self { parent, positions, tokens })
    }

    pub fn k(&self) -> usize {
        self.positions.len()
    }
}

pub(crate) fn validate(parent: &SequenceState, positions: &[usize], tokens: &[TokenId]) -> Result<()> {
    if positions.is_empty() {
        return Err(Error::contract("a transition must reveal at least one position"));
    }
    if positions.len() != tokens.len() {
        return Err(Error::contract("positions and tokens differ in length"));
    }
    for (i, &p) in positions.iter().enumerate() {
        match parent.completion().get(p) {
            None => return Err(Error::contract(format!("position {p} outside completion"))),
            Some(s) if !s.is_masked() => {
                return Err(Error::contract(format!("position {p} is already decoded in the parent")))
            }
            _ => {}
        }
        if positions[..i].contains(&p) {
            return Err(Error::contract(format!("position {p} listed twice")));
        }
    }
    Ok(())
}

/// `f^{d_i}(y^{d_i} | parent)` for each revealed position, from one forward pass.
pub fn single_pass_probs<P: Policy + ?Sized>(
    policy: &P,
    parent: &SequenceState,
    positions: &[usize],
    tokens: &[TokenId],
) -> Result<Vec<f64>> {
    validate(parent, positions, tokens)?;
    let grid = policy.forward(parent)?;
    Ok(positions.iter().zip(tokens).map(|(&p, &t)| grid.prob(p, t)).collect())
}

/// Sum of log target probabilities from one forward pass on the parent.
pub fn single_pass_log_prob<P: Policy + ?Sized>(
    policy: &P,
    parent: &SequenceState,
    positions: &[usize],
    tokens: &[TokenId],
) -> Result<f64> {
    Ok(single_pass_probs(policy, parent, positions, tokens)?.iter().map(|p| p.ln()).sum())
}

/// Order-marginalized transition probability. Refuses when `k > cap`.
pub fn exact_transition_prob<P: Policy + ?Sized>(
    policy: &P,
    parent: &SequenceState,
    positions: &[usize],
    tokens: &[TokenId],
    order: OrderDistribution,
    cap: usize,
) -> Result<f64> {
    let lattice = TransitionLattice::build(policy, parent, positions, tokens, cap)?;
    Ok(lattice.log_exact(order).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceGap {
    pub eps_parent: f64,
    pub eps_path: f64,
    pub eps: f64,
}

/// Worst-case gap between target probabilities and 1, on the parent and along every path.
pub fn confidence_gap<P: Policy + ?Sized>(
    policy: &P,
    parent: &SequenceState,
    positions: &[usize],
    tokens: &[TokenId],
    cap: usize,
) -> Result<ConfidenceGap> {
    Ok(TransitionLattice::build(policy, parent, positions, tokens, cap)?.confidence_gap())
}

pub(crate) fn factorial(k: usize) -> u128 {
    (1..=k as u128).product()
}
