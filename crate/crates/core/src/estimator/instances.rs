use rand::Rng;

use crate::error::Result;
use crate::estimator::Transition;
use crate::policy::decode::sample_token;
use crate::policy::{ModelConfig, Policy, PolicyModel, SequenceState};
use crate::vocab::Vocabulary;

/// A freshly initialized toy model plus one transition revealing `k` positions.
///
/// The head gain is drawn from `[0.5, 4]` so instances span a range of confidences. Target
/// tokens are sampled from the parent-state rows, the way a rollout would produce them.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, k: usize, vocab_size: usize) -> Result<(PolicyModel, Transition)> {
    let extra = rng.gen_range(0..=2);
    let length = k + extra;
    let prompt_len = rng.gen_range(1..=3);
    let cfg = ModelConfig {
        vocab_size,
        d_model: 8,
        n_layers: 2,
        n_heads: 2,
        d_hidden: 16,
        max_seq_len: prompt_len + length,
        init_scale: 1.0,
        head_init: rng.gen_range(0.5..4.0),
        seed: rng.gen(),
    };
    let vocab = Vocabulary::synthetic(vocab_size)?;
    let model = PolicyModel::new(cfg, vocab.clone())?;
    let prompt = (0..prompt_len).map(|_| rng.gen_range(1..vocab_size)).collect();
    let mut parent = SequenceState::masked(prompt, length, length)?;

    // pre-decode the extra slots so the step's k positions are not simply "everything"
    let mut all: Vec<usize> = (0..length).collect();
    for i in (1..all.len()).rev() {
        all.swap(i, rng.gen_range(0..=i));
    }
    let (pre, step) = all.split_at(extra);
    if !pre.is_empty() {
        let toks: Vec<usize> = pre.iter().map(|_| rng.gen_range(1..vocab_size)).collect();
        parent = parent.with_revealed(pre, &toks)?;
    }
    let grid = model.forward(&parent)?;
    let mut positions = step.to_vec();
    positions.sort_unstable();
    let tokens = positions.iter().map(|&p| sample_token(grid.completion_row(p), 1.0, vocab.mask_id(), rng)).collect();
    let t = Transition::new(parent, positions, tokens)?;
    Ok((model, t))
}
