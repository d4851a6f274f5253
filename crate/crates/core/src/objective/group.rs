use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::SequenceState;
use crate::tree::{ParentGroup, RolloutTree};
use crate::vocab::TokenId;

/// One child of a sibling group, as seen by the loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildSample {
    /// Tokens at the group's positions, in position order.
    pub tokens: Vec<TokenId>,
    pub old_probs: Vec<f64>,
    pub advantage: f64,
}

/// A parent state and the children that reveal the same `k` positions from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossGroup {
    pub parent_state: SequenceState,
    pub positions: Vec<usize>,
    pub children: Vec<ChildSample>,
}

impl LossGroup {
    pub fn new(parent_state: SequenceState, positions: Vec<usize>, children: Vec<ChildSample>) -> Result<Self> {
        let g = Self { parent_state, positions, children };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        crate::estimator::validate(
            &self.parent_state,
            &self.positions,
            &vec![0; self.positions.len()],
        )?;
        if self.children.is_empty() {
            return Err(Error::contract("a loss group needs at least one child"));
        }
        let k = self.positions.len();
        for (i, c) in self.children.iter().enumerate() {
            if c.tokens.len() != k || c.old_probs.len() != k {
                return Err(Error::contract(format!("child {i} does not cover the group's {k} positions")));
            }
            if let Some(p) = c.old_probs.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
                return Err(Error::contract(format!("child {i} has old probability {p} outside (0, 1]")));
            }
            if !c.advantage.is_finite() {
                return Err(Error::contract(format!("child {i} has non-finite advantage")));
            }
        }
        Ok(())
    }

    /// Collects a sibling group from a tree whose advantages have been computed.
    pub fn from_tree(tree: &RolloutTree, group: &ParentGroup) -> Result<Self> {
        let parent = tree.node(group.parent);
        let first = tree.node(group.children[0]);
        let positions = first.decoded_positions.clone();
        let mut children = Vec::with_capacity(group.children.len());
        for (&id, &advantage) in group.children.iter().zip(&group.advantages) {
            let node = tree.node(id);
            if node.decoded_positions != positions {
                return Err(Error::contract(format!(
                    "siblings under node {} decode different positions",
                    group.parent
                )));
            }
            children.push(ChildSample { tokens: node.decoded_tokens.clone(), old_probs: node.old_probs.clone(), advantage });
        }
        Self::new(parent.state.clone(), positions, children)
    }

    pub fn k(&self) -> usize {
        self.positions.len()
    }

    pub fn advantages(&self) -> Vec<f64> {
        self.children.iter().map(|c| c.advantage).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.children.iter().all(|c| c.advantage == 0.0)
    }
}
