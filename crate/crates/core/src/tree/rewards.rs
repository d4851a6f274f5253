use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::RolloutTree;
use crate::vocab::TokenId;

/// Scores every leaf with `verifier` and sets each internal reward to the mean of its
/// children.
///
/// A parent whose children all carry the same reward takes that reward verbatim; a summed
/// mean could be off by an ulp and turn a tied group into a spurious nonzero one.
pub fn propagate_rewards<F>(tree: &mut RolloutTree, mut verifier: F) -> Result<()>
where
    F: FnMut(&[TokenId]) -> f64,
{
    for id in (0..tree.nodes.len()).rev() {
        let reward = if tree.nodes[id].is_leaf() {
            let tokens = tree.nodes[id]
                .state
                .completion_tokens()
                .ok_or_else(|| Error::contract(format!("leaf {id} is not fully decoded")))?;
            let r = verifier(&tokens);
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::contract(format!("verifier returned {r} for leaf {id}; rewards must lie in [0, 1]")));
            }
            r
        } else {
            let rewards: Vec<f64> = tree.nodes[id]
                .children
                .iter()
                .map(|&c| tree.nodes[c].reward.expect("children are scored before parents"))
                .collect();
            mean_reward(&rewards)
        };
        tree.nodes[id].reward = Some(reward);
    }
    Ok(())
}

pub(crate) fn mean_reward(rewards: &[f64]) -> f64 {
    if rewards.iter().all(|&r| r == rewards[0]) {
        return rewards[0];
    }
    rewards.iter().sum::<f64>() / rewards.len() as f64
}

/// One sibling group: the children of `parent` and their advantages `R_c - R_p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentGroup {
    pub parent: usize,
    pub parent_reward: f64,
    pub children: Vec<usize>,
    pub advantages: Vec<f64>,
}

impl ParentGroup {
    /// All advantages are zero, so the group carries no policy-gradient signal.
    pub fn is_zero(&self) -> bool {
        self.advantages.iter().all(|&a| a == 0.0)
    }
}

/// Advantages for every parent-child edge, grouped by parent in arena order.
///
/// The last child's advantage is the negated left-to-right sum of its siblings', so each
/// group sums to exactly zero under left-to-right summation; it differs from `R_c - R_p` by
/// at most rounding.
pub fn compute_advantages(tree: &mut RolloutTree) -> Result<Vec<ParentGroup>> {
    if tree.nodes.iter().any(|n| n.reward.is_none()) {
        return Err(Error::Sequencing("advantages requested before rewards were propagated".into()));
    }
    let mut groups = Vec::new();
    for id in 0..tree.nodes.len() {
        if tree.nodes[id].is_leaf() {
            continue;
        }
        let r_p = tree.nodes[id].reward.unwrap();
        let children = tree.nodes[id].children.clone();
        let mut advantages: Vec<f64> = children.iter().map(|&c| tree.nodes[c].reward.unwrap() - r_p).collect();
        let n = advantages.len();
        let head: f64 = advantages[..n - 1].iter().sum();
        advantages[n - 1] = -head;
        for (&c, &a) in children.iter().zip(&advantages) {
            tree.nodes[c].advantage = Some(a);
        }
        groups.push(ParentGroup { parent: id, parent_reward: r_p, children, advantages });
    }
    Ok(groups)
}
