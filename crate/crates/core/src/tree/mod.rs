//! Rollout tree over denoising trajectories.
//!
//! The root holds the prompt and a fully masked completion. Every internal node is expanded
//! into `B` independent continuations of `s = N / H` denoising steps, so a leaf at depth `H`
//! is fully decoded. Nodes live in an arena in breadth-first order.

mod build;
mod dump;
mod rewards;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::SequenceState;
use crate::vocab::TokenId;

pub use build::build_tree;
pub use dump::{read_dump, write_dump, NodeRecord};
pub use rewards::{compute_advantages, propagate_rewards, ParentGroup};

/// Shape of a rollout tree and of the decoding that fills it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Children per internal node (`B`).
    pub branch: usize,
    /// Tree steps from root to leaf (`H`).
    pub height: usize,
    /// Total denoising steps for one completion (`N`).
    pub steps: usize,
    /// Completion length (`L`).
    pub length: usize,
    /// Block length (`b`).
    pub block: usize,
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        let TreeConfig { branch, height, steps, length, block } = *self;
        if branch < 2 {
            return Err(Error::config(format!("branch factor must be at least 2, got {branch}")));
        }
        if height == 0 || steps == 0 || length == 0 || block == 0 {
            return Err(Error::config("height, steps, length and block must be positive"));
        }
        if steps % height != 0 {
            return Err(Error::config(format!("height {height} does not divide denoising steps {steps}")));
        }
        if length % steps != 0 {
            return Err(Error::config(format!("{steps} denoising steps do not split length {length} evenly")));
        }
        if block % (length / steps) != 0 {
            return Err(Error::config(format!(
                "block length {block} is not a whole number of denoising steps at {} tokens per step",
                length / steps
            )));
        }
        validate_block_alignment(self).map_err(Error::Config)
    }

    /// Denoising steps per tree step (`s = N / H`).
    pub fn steps_per_tree_step(&self) -> usize {
        self.steps / self.height
    }

    /// Tokens revealed per tree step (`k = L / H`).
    pub fn tokens_per_tree_step(&self) -> usize {
        self.length / self.height
    }

    pub fn tokens_per_denoise_step(&self) -> usize {
        self.length / self.steps
    }

    pub fn num_leaves(&self) -> usize {
        self.branch.pow(self.height as u32)
    }
}

/// Accepts iff every tree step covers whole blocks.
pub fn validate_block_alignment(cfg: &TreeConfig) -> std::result::Result<(), String> {
    let TreeConfig { height, length, block, .. } = *cfg;
    if block == 0 || height == 0 {
        return Err("block length and height must be positive".into());
    }
    if length % block != 0 {
        return Err(format!("block length {block} does not divide completion length {length}"));
    }
    let blocks = length / block;
    if blocks % height != 0 {
        return Err(format!("{blocks} blocks are not divisible by height {height}"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeCost {
    pub tree_steps: u128,
    pub denoise_steps: u128,
    pub forward_passes_for_update: u128,
}

/// Counts for one tree: `B(B^H - 1)/(B - 1)` edges, `N / H` denoising steps per edge, and one
/// single-pass estimate per edge. Saturates instead of overflowing.
pub fn tree_cost(cfg: &TreeConfig) -> TreeCost {
    let b = cfg.branch as u128;
    let leaves = b.saturating_pow(cfg.height as u32);
    let tree_steps = b.saturating_mul(leaves - 1) / (b - 1);
    let per_edge = (cfg.steps / cfg.height) as u128;
    TreeCost {
        tree_steps,
        denoise_steps: tree_steps.saturating_mul(per_edge),
        forward_passes_for_update: tree_steps,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub state: SequenceState,
    pub children: Vec<usize>,
    pub reward: Option<f64>,
    /// Positions newly decoded relative to the parent, ascending.
    pub decoded_positions: Vec<usize>,
    pub decoded_tokens: Vec<TokenId>,
    /// Old-policy probabilities of `decoded_tokens` from one forward pass on the parent state.
    pub old_probs: Vec<f64>,
    pub advantage: Option<f64>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Model calls observed while building a tree.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasuredCost {
    pub denoise_calls: usize,
    pub estimator_forwards: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutTree {
    pub config: TreeConfig,
    pub prompt_id: String,
    pub nodes: Vec<TreeNode>,
    pub measured: MeasuredCost,
}

impl RolloutTree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn internal(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| !n.is_leaf())
    }

    /// Mean reward over the leaves, if rewards have been propagated.
    pub fn mean_leaf_reward(&self) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0;
        for leaf in self.leaves() {
            sum += leaf.reward?;
            n += 1;
        }
        Some(sum / n as f64)
    }
}

#[cfg(test)]
mod tests;
