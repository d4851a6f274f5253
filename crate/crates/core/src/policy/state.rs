use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    Masked,
    Decoded(TokenId),
}

impl Slot {
    pub fn token(self) -> Option<TokenId> {
        match self {
            Slot::Decoded(t) => Some(t),
            Slot::Masked => None,
        }
    }

    pub fn is_masked(self) -> bool {
        matches!(self, Slot::Masked)
    }
}

/// A prompt followed by a partially decoded completion split into equal blocks.
///
/// Completion positions are addressed relative to the start of the completion.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SequenceState {
    prompt: Vec<TokenId>,
    completion: Vec<Slot>,
    block_length: usize,
}

impl SequenceState {
    /// Prompt plus a fully masked completion of `length` slots.
    pub fn masked(prompt: Vec<TokenId>, length: usize, block_length: usize) -> Result<Self> {
        if block_length == 0 || length == 0 || !length.is_multiple_of(block_length) {
            return Err(Error::config(format!(
                "block length {block_length} must be positive and divide completion length {length}"
            )));
        }
        Ok(Self { prompt, completion: vec![Slot::Masked; length], block_length })
    }

    /// Builds a state from explicit slots, checking the block-ordering invariant.
    pub fn from_slots(prompt: Vec<TokenId>, completion: Vec<Slot>, block_length: usize, mask_id: TokenId) -> Result<Self> {
        if block_length == 0 || completion.is_empty() || !completion.len().is_multiple_of(block_length) {
            return Err(Error::config("block length must be positive and divide the completion length"));
        }
        if completion.contains(&Slot::Decoded(mask_id)) {
            return Err(Error::contract("decoded slot holds the mask sentinel"));
        }
        let s = Self { prompt, completion, block_length };
        s.check_block_order()?;
        Ok(s)
    }

    fn check_block_order(&self) -> Result<()> {
        let Some(active) = self.active_block() else { return Ok(()) };
        for blk in active + 1..self.num_blocks() {
            if self.block_range(blk).any(|i| !self.completion[i].is_masked()) {
                return Err(Error::contract(format!(
                    "block {blk} has decoded slots while block {active} is still incomplete"
                )));
            }
        }
        Ok(())
    }

    pub fn prompt(&self) -> &[TokenId] {
        &self.prompt
    }

    pub fn completion(&self) -> &[Slot] {
        &self.completion
    }

    pub fn prompt_len(&self) -> usize {
        self.prompt.len()
    }

    pub fn completion_len(&self) -> usize {
        self.completion.len()
    }

    pub fn seq_len(&self) -> usize {
        self.prompt.len() + self.completion.len()
    }

    pub fn block_length(&self) -> usize {
        self.block_length
    }

    pub fn num_blocks(&self) -> usize {
        self.completion.len() / self.block_length
    }

    pub fn decoded_count(&self) -> usize {
        self.completion.iter().filter(|s| !s.is_masked()).count()
    }

    pub fn is_fully_decoded(&self) -> bool {
        self.completion.iter().all(|s| !s.is_masked())
    }

    pub fn block_range(&self, block: usize) -> std::ops::Range<usize> {
        block * self.block_length..(block + 1) * self.block_length
    }

    /// Leftmost block that still has a masked slot.
    pub fn active_block(&self) -> Option<usize> {
        self.completion.iter().position(|s| s.is_masked()).map(|i| i / self.block_length)
    }

    pub fn masked_in_active_block(&self) -> Vec<usize> {
        match self.active_block() {
            Some(b) => self.block_range(b).filter(|&i| self.completion[i].is_masked()).collect(),
            None => Vec::new(),
        }
    }

    pub fn masked_positions(&self) -> Vec<usize> {
        (0..self.completion.len()).filter(|&i| self.completion[i].is_masked()).collect()
    }

    /// Token ids fed to the model, with masked slots rendered as `mask_id`.
    pub fn model_input(&self, mask_id: TokenId) -> Vec<TokenId> {
        let mut out = self.prompt.clone();
        out.extend(self.completion.iter().map(|s| s.token().unwrap_or(mask_id)));
        out
    }

    /// Decoded completion tokens, or `None` if any slot is still masked.
    pub fn completion_tokens(&self) -> Option<Vec<TokenId>> {
        self.completion.iter().map(|s| s.token()).collect()
    }

    /// Copy of `self` with `positions` revealed as `tokens`. Positions must currently be masked.
    ///
    /// No block-order check: the estimator reveals arbitrary subsets of a tree step.
    pub fn with_revealed(&self, positions: &[usize], tokens: &[TokenId]) -> Result<Self> {
        if positions.len() != tokens.len() {
            return Err(Error::contract("positions and tokens differ in length"));
        }
        let mut next = self.clone();
        for (&p, &t) in positions.iter().zip(tokens) {
            match next.completion.get(p) {
                Some(Slot::Masked) => next.completion[p] = Slot::Decoded(t),
                Some(Slot::Decoded(_)) => {
                    return Err(Error::contract(format!("position {p} is already decoded")));
                }
                None => return Err(Error::contract(format!("position {p} outside completion"))),
            }
        }
        Ok(next)
    }

    /// Positions decoded in `child` that are masked in `self`.
    pub fn newly_decoded(&self, child: &Self) -> Vec<usize> {
        (0..self.completion.len())
            .filter(|&i| self.completion[i].is_masked() && !child.completion[i].is_masked())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_state_bookkeeping() {
        let s = SequenceState::masked(vec![5, 6], 8, 4).unwrap();
        assert_eq!(s.decoded_count(), 0);
        assert_eq!(s.active_block(), Some(0));
        assert_eq!(s.masked_in_active_block(), vec![0, 1, 2, 3]);
        assert_eq!(s.model_input(0), vec![5, 6, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert!(SequenceState::masked(vec![], 8, 3).is_err());
    }

    #[test]
    fn reveal_updates_counts_and_rejects_redecode() {
        let s = SequenceState::masked(vec![], 4, 2).unwrap();
        let t = s.with_revealed(&[1, 0], &[7, 8]).unwrap();
        assert_eq!(t.decoded_count(), 2);
        assert_eq!(t.active_block(), Some(1));
        assert_eq!(s.newly_decoded(&t), vec![0, 1]);
        assert!(t.with_revealed(&[1], &[3]).is_err());
    }

    #[test]
    fn block_order_is_enforced_on_construction() {
        let slots = vec![Slot::Masked, Slot::Masked, Slot::Decoded(3), Slot::Masked];
        assert!(SequenceState::from_slots(vec![], slots, 2, 0).is_err());
        let ok = vec![Slot::Decoded(4), Slot::Masked, Slot::Masked, Slot::Masked];
        assert!(SequenceState::from_slots(vec![], ok, 2, 0).is_ok());
        let bad_mask = vec![Slot::Decoded(0), Slot::Masked];
        assert!(SequenceState::from_slots(vec![], bad_mask, 2, 0).is_err());
    }
}
