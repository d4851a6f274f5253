use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{lambda_schedule, tau_schedule, total_loss, LossBreakdown, LossGroup};
use crate::policy::checkpoint;
use crate::policy::stats::entropy;
use crate::policy::{compute_gradients, Policy, PolicyModel};
use crate::tasks::{sample_instance, task_vocabulary};
use crate::train::{pretrain, Adam, TrainConfig};
use crate::tree::{build_tree, compute_advantages, propagate_rewards, RolloutTree};

/// Wall-clock milliseconds per phase of one outer step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub rollout_ms: f64,
    pub update_ms: f64,
}

/// One line of the metrics stream, written after every outer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub mode: String,
    /// Mean leaf reward of the step's tree.
    pub mean_tree_reward: f64,
    pub root_reward: f64,
    /// Mean entropy of the rollout policy over the positions each internal node's children
    /// decode.
    pub masked_entropy: f64,
    /// Per-group means over the gradient steps taken.
    pub loss: LossBreakdown,
    pub updates: usize,
    /// Sibling groups with at least one nonzero advantage.
    pub eligible_groups: usize,
    pub grad_norm: f64,
    pub tau: f64,
    pub lambda: f64,
    pub denoise_calls: usize,
    pub estimator_forwards: usize,
    pub timing: PhaseTiming,
}

pub struct TrainOutcome {
    pub model: PolicyModel,
    pub metrics: Vec<MetricsRecord>,
}

/// Independent RNG streams fanned out from the master seed.
pub(crate) struct Streams {
    pub init: u64,
    pub prompts: ChaCha8Rng,
    pub rollouts: ChaCha8Rng,
    pub groups: ChaCha8Rng,
    pub pretrain: ChaCha8Rng,
}

impl Streams {
    pub(crate) fn new(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(id);
            r
        };
        Self { init: stream(0).gen(), prompts: stream(1), rollouts: stream(2), groups: stream(3), pretrain: stream(4) }
    }
}

/// Fresh or checkpointed model as the config asks, warm-started when `pretrain_steps > 0`.
pub fn initial_model(cfg: &TrainConfig) -> Result<PolicyModel> {
    let mut streams = Streams::new(cfg.seed);
    let mut model = base_model(cfg, streams.init)?;
    if cfg.pretrain_steps > 0 {
        let loss = pretrain(&mut model, &cfg.task_spec(), cfg.pretrain_steps, cfg.pretrain_lr, &mut streams.pretrain)?;
        log::info!("warm start: {} steps, final loss {loss:.4}", cfg.pretrain_steps);
    }
    Ok(model)
}

fn base_model(cfg: &TrainConfig, init_seed: u64) -> Result<PolicyModel> {
    let vocab = task_vocabulary();
    match &cfg.init_checkpoint {
        Some(path) => {
            let m = checkpoint::load(path)?;
            if m.vocab() != &vocab {
                return Err(Error::Checkpoint("checkpoint vocabulary does not match the task vocabulary".into()));
            }
            if m.config().max_seq_len < cfg.max_prompt_len() + cfg.length {
                return Err(Error::Checkpoint("checkpoint context is too short for this task".into()));
            }
            Ok(m)
        }
        None => PolicyModel::new(cfg.model_config(init_seed), vocab),
    }
}

/// Mean entropy of `policy` at the positions decoded below each internal node.
pub fn tree_masked_entropy<P: Policy + ?Sized>(policy: &P, tree: &RolloutTree) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for node in tree.internal() {
        let positions = &tree.node(node.children[0]).decoded_positions;
        let grid = policy.forward(&node.state)?;
        for &p in positions {
            total += entropy(grid.completion_row(p));
            n += 1;
        }
    }
    Ok(total / n.max(1) as f64)
}

/// Runs the outer loop: snapshot the old policy, roll out one tree, score it, then take
/// `mu` gradient steps, each on one sibling group with a nonzero advantage.
///
/// Groups are visited in a shuffled cycle without replacement. Steps whose tree has no
/// eligible group make no update. `observer` sees each record as it is produced.
pub fn train_with<F: FnMut(&MetricsRecord)>(cfg: &TrainConfig, mut observer: F) -> Result<TrainOutcome> {
    cfg.validate()?;
    let spec = cfg.task_spec();
    let tree_cfg = cfg.tree_config();
    let obj = cfg.objective();
    let loss_mode = cfg.mode.loss_mode();
    let mut streams = Streams::new(cfg.seed);
    let mut model = initial_model(cfg)?;
    let reference = model.clone();
    let mut adam = Adam::new(model.params(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.grad_clip);

    let mut sink = match &cfg.out_dir {
        Some(dir) => Some(OutputDir::create(dir, cfg)?),
        None => None,
    };
    let mut metrics = Vec::with_capacity(cfg.total_steps);

    for step in 0..cfg.total_steps {
        let t = step as f64;
        let started = Instant::now();
        let old = model.clone();
        let instance = sample_instance(&spec, &mut streams.prompts)?;
        let mut tree = build_tree(&old, &instance.prompt, format!("seed-{}", instance.seed), &tree_cfg, cfg.temperature, &mut streams.rollouts)?;
        propagate_rewards(&mut tree, |c| instance.reward(c))?;
        let groups = compute_advantages(&mut tree)?;
        let masked_entropy = tree_masked_entropy(&old, &tree)?;
        let rollout_ms = started.elapsed().as_secs_f64() * 1e3;

        let started = Instant::now();
        let mut eligible: Vec<LossGroup> = Vec::new();
        for g in groups.iter().filter(|g| !g.is_zero()) {
            eligible.push(LossGroup::from_tree(&tree, g)?);
        }
        let mut sum = LossBreakdown::default();
        let mut grad_norm = 0.0;
        let mut order: Vec<usize> = Vec::new();
        let mut updates = 0;
        if !eligible.is_empty() {
            for _ in 0..cfg.mu {
                if order.is_empty() {
                    order = (0..eligible.len()).collect();
                    order.shuffle(&mut streams.groups);
                    order.reverse();
                }
                let group = &eligible[order.pop().expect("refilled")];
                let result = total_loss(&model, &reference, group, t, &obj, loss_mode)
                    .and_then(|out| compute_gradients(&model, &out.graph, out.loss).map(|g| (out.breakdown, g)));
                let (breakdown, grads) = match result {
                    Ok(v) => v,
                    Err(e) => {
                        if let Some(s) = &mut sink {
                            s.save_last_good(&model)?;
                        }
                        return Err(e);
                    }
                };
                let before = model.clone();
                grad_norm += adam.step(model.params_mut(), &grads);
                if !model.params().is_finite() {
                    if let Some(s) = &mut sink {
                        s.save_last_good(&before)?;
                    }
                    return Err(Error::numeric("parameter update", format!("non-finite parameters at step {step}")));
                }
                sum.accumulate(&breakdown);
                updates += 1;
            }
        }
        let update_ms = started.elapsed().as_secs_f64() * 1e3;

        let record = MetricsRecord {
            step,
            mode: cfg.mode.name().to_string(),
            mean_tree_reward: tree.mean_leaf_reward().expect("rewards propagated"),
            root_reward: tree.root().reward.expect("rewards propagated"),
            masked_entropy,
            loss: sum.mean(),
            updates,
            eligible_groups: eligible.len(),
            grad_norm: grad_norm / updates.max(1) as f64,
            tau: tau_schedule(t, &obj.schedule),
            lambda: lambda_schedule(t, &obj.schedule),
            denoise_calls: tree.measured.denoise_calls,
            estimator_forwards: tree.measured.estimator_forwards,
            timing: PhaseTiming { rollout_ms, update_ms },
        };
        log::info!(
            "step {step}: reward {:.3} entropy {:.3} total {:.4}",
            record.mean_tree_reward,
            record.masked_entropy,
            record.loss.total
        );
        if let Some(s) = &mut sink {
            s.record(&record)?;
            if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 {
                s.checkpoint(&model, &format!("step_{:06}", step + 1))?;
            }
        }
        observer(&record);
        metrics.push(record);
    }
    if let Some(s) = &mut sink {
        s.checkpoint(&model, "final")?;
    }
    Ok(TrainOutcome { model, metrics })
}

pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(cfg, |_| {})
}

struct OutputDir {
    dir: std::path::PathBuf,
    metrics: BufWriter<File>,
}

impl OutputDir {
    fn create(dir: &Path, cfg: &TrainConfig) -> Result<Self> {
        fs::create_dir_all(dir.join("checkpoints"))?;
        fs::write(dir.join("config.toml"), cfg.to_toml_string())?;
        let metrics = BufWriter::new(File::create(dir.join("metrics.jsonl"))?);
        Ok(Self { dir: dir.to_path_buf(), metrics })
    }

    fn record(&mut self, r: &MetricsRecord) -> Result<()> {
        serde_json::to_writer(&mut self.metrics, r)?;
        self.metrics.write_all(b"\n")?;
        self.metrics.flush()?;
        Ok(())
    }

    fn checkpoint(&self, model: &PolicyModel, name: &str) -> Result<()> {
        checkpoint::save(model, &self.dir.join("checkpoints").join(format!("{name}.ckpt")))
    }

    fn save_last_good(&mut self, model: &PolicyModel) -> Result<()> {
        self.metrics.flush()?;
        self.checkpoint(model, "last_good")
    }
}

/// Reads a metrics stream back.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = fs::read_to_string(path)?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}
