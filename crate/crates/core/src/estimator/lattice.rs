use crate::error::{Error, Result};
use crate::estimator::{factorial, validate, ConfidenceGap, OrderDistribution};
use crate::policy::decode::confidence;
use crate::policy::{Policy, SequenceState};
use crate::tensor::log_sum_exp;
use crate::vocab::TokenId;

/// Forward-pass readouts for every subset of revealed positions of one transition.
///
/// Subsets are bitmasks over indices into `positions`.
#[derive(Debug, Clone)]
pub struct TransitionLattice {
    positions: Vec<usize>,
    /// `target[s][j]`: probability of the target token at `positions[j]` given subset `s` revealed.
    target: Vec<Vec<f64>>,
    /// `conf[s][j]`: max probability of the row at `positions[j]` given subset `s` revealed.
    conf: Vec<Vec<f64>>,
    forward_passes: usize,
}

impl TransitionLattice {
    pub fn build<P: Policy + ?Sized>(
        policy: &P,
        parent: &SequenceState,
        positions: &[usize],
        tokens: &[TokenId],
        cap: usize,
    ) -> Result<Self> {
        validate(parent, positions, tokens)?;
        let k = positions.len();
        if k > cap {
            return Err(Error::CapExceeded { k, cap, cost: factorial(k) * k as u128 });
        }
        let n_subsets = 1usize << k;
        let mut target = Vec::with_capacity(n_subsets);
        let mut conf = Vec::with_capacity(n_subsets);
        for s in 0..n_subsets {
            let (rp, rt): (Vec<usize>, Vec<TokenId>) =
                (0..k).filter(|j| s & (1 << j) != 0).map(|j| (positions[j], tokens[j])).unzip();
            let ctx = parent.with_revealed(&rp, &rt)?;
            let grid = policy.forward(&ctx)?;
            target.push((0..k).map(|j| grid.prob(positions[j], tokens[j])).collect());
            conf.push((0..k).map(|j| confidence(grid.completion_row(positions[j]))).collect());
        }
        Ok(Self { positions: positions.to_vec(), target, conf, forward_passes: n_subsets })
    }

    pub fn k(&self) -> usize {
        self.positions.len()
    }

    pub fn forward_passes(&self) -> usize {
        self.forward_passes
    }

    fn full(&self) -> usize {
        (1 << self.k()) - 1
    }

    /// Target probabilities on the parent state.
    pub fn parent_probs(&self) -> &[f64] {
        &self.target[0]
    }

    pub fn log_single_pass(&self) -> f64 {
        self.target[0].iter().map(|p| p.ln()).sum()
    }

    /// Probability that `order` reveals `positions[j]` next, given subset `s` already revealed.
    pub fn step_prob(&self, order: OrderDistribution, s: usize, j: usize) -> f64 {
        debug_assert!(s & (1 << j) == 0);
        let remaining: Vec<usize> = (0..self.k()).filter(|&i| s & (1 << i) == 0).collect();
        match order {
            OrderDistribution::UniformOrders => 1.0 / remaining.len() as f64,
            OrderDistribution::GreedyConfidence => {
                let best = remaining
                    .iter()
                    .copied()
                    .max_by(|&a, &b| {
                        self.conf[s][a].total_cmp(&self.conf[s][b]).then(self.positions[b].cmp(&self.positions[a]))
                    })
                    .expect("remaining is nonempty");
                if best == j {
                    1.0
                } else {
                    0.0
                }
            }
            OrderDistribution::SoftmaxConfidence { temperature } => {
                let logits: Vec<f64> = remaining.iter().map(|&i| self.conf[s][i] / temperature).collect();
                let lse = log_sum_exp(&logits);
                (self.conf[s][j] / temperature - lse).exp()
            }
        }
    }

    /// `log P(c | p)`: log of the order-weighted sum of step-probability products.
    pub fn log_exact(&self, order: OrderDistribution) -> f64 {
        let k = self.k();
        let full = self.full();
        let mut log_v = vec![f64::NEG_INFINITY; full + 1];
        log_v[full] = 0.0;
        let mut by_size: Vec<usize> = (0..full).collect();
        by_size.sort_by_key(|s| std::cmp::Reverse(s.count_ones()));
        for s in by_size {
            let terms: Vec<f64> = (0..k)
                .filter(|&j| s & (1 << j) == 0)
                .filter_map(|j| {
                    let w = self.step_prob(order, s, j);
                    (w > 0.0).then(|| w.ln() + self.target[s][j].ln() + log_v[s | (1 << j)])
                })
                .collect();
            log_v[s] = if terms.is_empty() { f64::NEG_INFINITY } else { log_sum_exp(&terms) };
        }
        log_v[0]
    }

    /// Every order of the `k` positions with its probability under `order`.
    pub fn order_weights(&self, order: OrderDistribution) -> Vec<(Vec<usize>, f64)> {
        let mut out = Vec::with_capacity(factorial(self.k()) as usize);
        let mut prefix = Vec::with_capacity(self.k());
        self.walk(order, 0, 1.0, &mut prefix, &mut out);
        out
    }

    fn walk(&self, order: OrderDistribution, s: usize, w: f64, prefix: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, f64)>) {
        if s == self.full() {
            out.push((prefix.iter().map(|&j| self.positions[j]).collect(), w));
            return;
        }
        for j in 0..self.k() {
            if s & (1 << j) == 0 {
                prefix.push(j);
                self.walk(order, s | (1 << j), w * self.step_prob(order, s, j), prefix, out);
                prefix.pop();
            }
        }
    }

    /// Target probability at each step of `order_positions` (given as completion positions).
    pub fn path_probs(&self, order_positions: &[usize]) -> Vec<f64> {
        let mut s = 0usize;
        order_positions
            .iter()
            .map(|p| {
                let j = self.positions.iter().position(|q| q == p).expect("position belongs to the transition");
                let q = self.target[s][j];
                s |= 1 << j;
                q
            })
            .collect()
    }

    /// The parent gap is over the parent-state targets; the path gap is over every step of
    /// every order in the full order set, not only orders the distribution supports.
    pub fn confidence_gap(&self) -> ConfidenceGap {
        let eps_parent = self.target[0].iter().map(|p| 1.0 - p).fold(0.0, f64::max);
        let mut eps_path: f64 = 0.0;
        for s in 0..self.full() {
            for j in 0..self.k() {
                if s & (1 << j) == 0 {
                    eps_path = eps_path.max(1.0 - self.target[s][j]);
                }
            }
        }
        ConfidenceGap { eps_parent, eps_path, eps: eps_parent.max(eps_path) }
    }
}
