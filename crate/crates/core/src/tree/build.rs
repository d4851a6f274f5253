use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimator::single_pass_probs;
use crate::policy::{denoise_step, Counting, Policy, SequenceState};
use crate::tree::{MeasuredCost, RolloutTree, TreeConfig, TreeNode};
use crate::vocab::TokenId;

/// Expands a full tree with the old policy.
///
/// One `u64` tree seed is drawn from `rng`; each child then samples from its own ChaCha
/// stream keyed by its arena id, so siblings are independent and the tree is reproducible
/// from the seed alone.
pub fn build_tree<P: Policy + ?Sized, R: Rng + ?Sized>(
    policy_old: &P,
    prompt: &[TokenId],
    prompt_id: impl Into<String>,
    cfg: &TreeConfig,
    temperature: f64,
    rng: &mut R,
) -> Result<RolloutTree> {
    cfg.validate()?;
    if !(temperature.is_finite() && temperature >= 0.0) {
        return Err(Error::config(format!("temperature must be finite and non-negative, got {temperature}")));
    }
    let tree_seed: u64 = rng.gen();
    let decoder = Counting::new(policy_old);
    let estimator = Counting::new(policy_old);
    let s = cfg.steps_per_tree_step();
    let per_step = cfg.tokens_per_denoise_step();

    let root_state = SequenceState::masked(prompt.to_vec(), cfg.length, cfg.block)?;
    let mut nodes = vec![TreeNode {
        id: 0,
        parent: None,
        depth: 0,
        state: root_state,
        children: Vec::new(),
        reward: None,
        decoded_positions: Vec::new(),
        decoded_tokens: Vec::new(),
        old_probs: Vec::new(),
        advantage: None,
    }];

    let mut next = 0;
    while next < nodes.len() {
        let parent_id = next;
        next += 1;
        if nodes[parent_id].depth == cfg.height {
            continue;
        }
        let parent_state = nodes[parent_id].state.clone();
        for _ in 0..cfg.branch {
            let id = nodes.len();
            let mut stream = ChaCha8Rng::seed_from_u64(tree_seed);
            stream.set_stream(id as u64);
            let mut state = parent_state.clone();
            for _ in 0..s {
                state = denoise_step(&decoder, &state, per_step, temperature, &mut stream)?;
            }
            let positions = parent_state.newly_decoded(&state);
            let tokens: Vec<TokenId> = positions
                .iter()
                .map(|&p| state.completion()[p].token().expect("newly decoded slot holds a token"))
                .collect();
            let old_probs = single_pass_probs(&estimator, &parent_state, &positions, &tokens)?;
            if let Some(p) = old_probs.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
                return Err(Error::numeric(
                    format!("tree node {id}"),
                    format!("old-policy probability {p} outside (0, 1]"),
                ));
            }
            nodes.push(TreeNode {
                id,
                parent: Some(parent_id),
                depth: nodes[parent_id].depth + 1,
                state,
                children: Vec::new(),
                reward: None,
                decoded_positions: positions,
                decoded_tokens: tokens,
                old_probs,
                advantage: None,
            });
            nodes[parent_id].children.push(id);
        }
    }

    let measured = MeasuredCost { denoise_calls: decoder.calls(), estimator_forwards: estimator.calls() };
    Ok(RolloutTree { config: *cfg, prompt_id: prompt_id.into(), nodes, measured })
}
