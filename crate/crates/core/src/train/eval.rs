use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{generate, DecodeSchedule, PolicyModel};
use crate::tasks::{instance_from_seed, task_vocabulary, TaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub instances: usize,
    pub solved: usize,
    pub pass_at_1: f64,
    pub mean_reward: f64,
}

/// Greedy pass@1 over instances seeded `seed, seed + 1, ...`.
///
/// Temperature 0 makes decoding deterministic, so the report depends only on the model
/// and the instance seeds.
pub fn evaluate(model: &PolicyModel, spec: &TaskSpec, n: usize, seed: u64, steps: usize, block: usize) -> Result<EvalReport> {
    if n == 0 {
        return Err(Error::config("evaluation needs at least one instance"));
    }
    spec.validate()?;
    if model.vocab() != &task_vocabulary() {
        return Err(Error::Checkpoint("checkpoint vocabulary does not match the task vocabulary".into()));
    }
    let schedule = DecodeSchedule::new(spec.length, steps, block)?;
    // greedy decoding never draws from the rng
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut solved = 0;
    let mut reward_sum = 0.0;
    for i in 0..n {
        let instance = instance_from_seed(spec, seed.wrapping_add(i as u64))?;
        if instance.prompt.len() + spec.length > model.config().max_seq_len {
            return Err(Error::Checkpoint(format!(
                "prompt of {} tokens plus completion of {} exceeds the model context {}",
                instance.prompt.len(),
                spec.length,
                model.config().max_seq_len
            )));
        }
        let state = generate(model, &instance.prompt, schedule, 0.0, &mut rng)?;
        let completion = state.completion_tokens().expect("generation decodes every position");
        let r = instance.reward(&completion);
        reward_sum += r;
        if r == 1.0 {
            solved += 1;
        }
    }
    Ok(EvalReport {
        task: spec.kind.name().to_string(),
        instances: n,
        solved,
        pass_at_1: solved as f64 / n as f64,
        mean_reward: reward_sum / n as f64,
    })
}
