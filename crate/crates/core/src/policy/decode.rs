//! Block-wise, confidence-ranked unmasking.

use rand::Rng;

use crate::error::{Error, Result};
use crate::policy::grid::DistributionGrid;
use crate::policy::model::Policy;
use crate::policy::state::{SequenceState, Slot};
use crate::vocab::TokenId;

/// Confidence of a row: its maximum probability.
pub fn confidence(row: &[f64]) -> f64 {
    row.iter().cloned().fold(0.0, f64::max)
}

/// Argmax over tokens other than `mask_id`, lowest index on ties.
pub fn argmax_token(row: &[f64], mask_id: TokenId) -> TokenId {
    let mut best = usize::MAX;
    let mut best_p = f64::NEG_INFINITY;
    for (v, &p) in row.iter().enumerate() {
        if v != mask_id && p > best_p {
            best = v;
            best_p = p;
        }
    }
    best
}

/// Sampling weights at `temperature` with the mask sentinel excluded, normalized to 1.
pub fn tempered_weights(row: &[f64], temperature: f64, mask_id: TokenId) -> Vec<f64> {
    let logs: Vec<f64> =
        row.iter().enumerate().map(|(v, &p)| if v == mask_id || p <= 0.0 { f64::NEG_INFINITY } else { p.ln() / temperature }).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logs.iter().map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { (l - max).exp() }).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Inverse-CDF draw from `weights` given a uniform `u` in `[0, 1)`.
pub fn inverse_cdf(weights: &[f64], u: f64) -> TokenId {
    let mut acc = 0.0;
    let mut last = 0;
    for (v, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = v;
        if u < acc {
            return v;
        }
    }
    last
}

/// Draws one token from `row`. Temperature 0 is argmax.
pub fn sample_token<R: Rng + ?Sized>(row: &[f64], temperature: f64, mask_id: TokenId, rng: &mut R) -> TokenId {
    if temperature == 0.0 {
        return argmax_token(row, mask_id);
    }
    let w = tempered_weights(row, temperature, mask_id);
    inverse_cdf(&w, rng.gen::<f64>())
}

/// Masked positions of the active block ranked by confidence, highest first, lowest position on ties.
pub fn rank_by_confidence(grid: &DistributionGrid, state: &SequenceState) -> Vec<usize> {
    let mut cands: Vec<(usize, f64)> =
        state.masked_in_active_block().into_iter().map(|i| (i, confidence(grid.completion_row(i)))).collect();
    cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    cands.into_iter().map(|(i, _)| i).collect()
}

/// Decodes `count` slots of the active block from a precomputed grid.
///
/// Positions are chosen by untempered confidence; tokens are then drawn at `temperature`,
/// one uniform per position in ranking order.
pub fn decode_from_grid<R: Rng + ?Sized>(
    grid: &DistributionGrid,
    state: &SequenceState,
    count: usize,
    temperature: f64,
    mask_id: TokenId,
    rng: &mut R,
) -> Result<SequenceState> {
    if !(temperature >= 0.0) {
        return Err(Error::invalid(format!("temperature must be nonnegative, got {temperature}")));
    }
    let ranked = rank_by_confidence(grid, state);
    if ranked.is_empty() {
        return Err(Error::invalid("no masked slots remain"));
    }
    if ranked.len() < count {
        return Err(Error::invalid(format!(
            "asked to decode {count} slots but the active block has only {} masked",
            ranked.len()
        )));
    }
    let mut slots = state.completion().to_vec();
    for &pos in &ranked[..count] {
        let tok = sample_token(grid.completion_row(pos), temperature, mask_id, rng);
        slots[pos] = Slot::Decoded(tok);
    }
    SequenceState::from_slots(state.prompt().to_vec(), slots, state.block_length(), mask_id)
}

/// One denoising step: a forward pass then [`decode_from_grid`].
pub fn denoise_step<P: Policy + ?Sized, R: Rng + ?Sized>(
    policy: &P,
    state: &SequenceState,
    count: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<SequenceState> {
    if state.masked_in_active_block().is_empty() {
        return Err(Error::invalid("no masked slots remain"));
    }
    let grid = policy.forward(state)?;
    decode_from_grid(&grid, state, count, temperature, policy.mask_id(), rng)
}

/// Decoding schedule for a completion of `length` tokens in `steps` steps with blocks of `block`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeSchedule {
    pub length: usize,
    pub steps: usize,
    pub block: usize,
}

impl DecodeSchedule {
    pub fn new(length: usize, steps: usize, block: usize) -> Result<Self> {
        if length == 0 || steps == 0 || block == 0 {
            return Err(Error::config("length, steps and block length must be positive"));
        }
        if !length.is_multiple_of(steps) {
            return Err(Error::config(format!("completion length {length} is not divisible by step count {steps}")));
        }
        if !length.is_multiple_of(block) {
            return Err(Error::config(format!("block length {block} does not divide completion length {length}")));
        }
        if !block.is_multiple_of(length / steps) {
            return Err(Error::config(format!(
                "block length {block} is not a whole number of steps at {} tokens per step",
                length / steps
            )));
        }
        Ok(Self { length, steps, block })
    }

    pub fn tokens_per_step(&self) -> usize {
        self.length / self.steps
    }

    pub fn steps_per_block(&self) -> usize {
        self.block * self.steps / self.length
    }
}

/// Full generation from a fully masked completion.
pub fn generate<P: Policy + ?Sized, R: Rng + ?Sized>(
    policy: &P,
    prompt: &[TokenId],
    schedule: DecodeSchedule,
    temperature: f64,
    rng: &mut R,
) -> Result<SequenceState> {
    let mut state = SequenceState::masked(prompt.to_vec(), schedule.length, schedule.block)?;
    for _ in 0..schedule.steps {
        state = denoise_step(policy, &state, schedule.tokens_per_step(), temperature, rng)?;
    }
    debug_assert!(state.is_fully_decoded());
    Ok(state)
}
