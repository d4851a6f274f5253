use crate::objective::LossGroup;

/// Per-position vote over the vocabulary, `k` rows of length `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution {
    pub probs: Vec<Vec<f64>>,
}

impl TargetDistribution {
    pub fn k(&self) -> usize {
        self.probs.len()
    }

    /// `sum_i sum_v P log P`, with `0 log 0 = 0`.
    pub fn neg_entropy_sum(&self) -> f64 {
        self.probs.iter().flatten().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum()
    }
}

/// `softmax(score / tau)` over the given `(child, score)` pairs. `tau = 0` puts equal mass
/// on the maximal scores.
fn tempered_softmax(scored: &[(usize, f64)], tau: f64) -> Vec<(usize, f64)> {
    if scored.is_empty() {
        return Vec::new();
    }
    let max = scored.iter().map(|&(_, s)| s).fold(f64::NEG_INFINITY, f64::max);
    if tau == 0.0 {
        let ties = scored.iter().filter(|&&(_, s)| s == max).count() as f64;
        return scored.iter().map(|&(c, s)| (c, if s == max { 1.0 / ties } else { 0.0 })).collect();
    }
    let e: Vec<f64> = scored.iter().map(|&(_, s)| ((s - max) / tau).exp()).collect();
    let z: f64 = e.iter().sum();
    scored.iter().zip(e).map(|(&(c, _), x)| (c, x / z)).collect()
}

/// Weights over the positive-advantage children, `softmax(A / tau)`. Empty when no child
/// has a positive advantage.
pub fn positive_group_weights(group: &LossGroup, tau: f64) -> Vec<(usize, f64)> {
    let scored: Vec<(usize, f64)> = group
        .children
        .iter()
        .enumerate()
        .filter(|(_, c)| c.advantage > 0.0)
        .map(|(i, c)| (i, c.advantage))
        .collect();
    tempered_softmax(&scored, tau)
}

/// Weights over the negative-advantage children, `softmax(|A| / tau)`.
pub fn negative_group_weights(group: &LossGroup, tau: f64) -> Vec<(usize, f64)> {
    let scored: Vec<(usize, f64)> = group
        .children
        .iter()
        .enumerate()
        .filter(|(_, c)| c.advantage < 0.0)
        .map(|(i, c)| (i, c.advantage.abs()))
        .collect();
    tempered_softmax(&scored, tau)
}

/// Weighted vote of the children's tokens at every position.
pub fn target_distribution(group: &LossGroup, weights: &[(usize, f64)], vocab_size: usize) -> TargetDistribution {
    let total: f64 = weights.iter().map(|&(_, w)| w).sum();
    let probs = (0..group.k())
        .map(|i| {
            let mut row = vec![0.0; vocab_size];
            for &(c, w) in weights {
                row[group.children[c].tokens[i]] += w;
            }
            row.iter_mut().for_each(|p| *p /= total);
            row
        })
        .collect();
    TargetDistribution { probs }
}
