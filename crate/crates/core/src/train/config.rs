use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{LossMode, ObjectiveConfig, ScheduleConfig};
use crate::policy::ModelConfig;
use crate::tasks::{task_vocabulary, TaskKind, TaskSpec};
use crate::tree::TreeConfig;

/// Training arm: a loss mode, or the full loss with both schedules reversed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Full,
    NoDistill,
    Diversity,
    ReverseSchedule,
}

impl TrainMode {
    pub fn all() -> [TrainMode; 4] {
        [TrainMode::Full, TrainMode::NoDistill, TrainMode::Diversity, TrainMode::ReverseSchedule]
    }

    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Full => "full",
            TrainMode::NoDistill => "no_distill",
            TrainMode::Diversity => "diversity",
            TrainMode::ReverseSchedule => "reverse_schedule",
        }
    }

    pub fn loss_mode(self) -> LossMode {
        match self {
            TrainMode::Full | TrainMode::ReverseSchedule => LossMode::Full,
            TrainMode::NoDistill => LossMode::NoDistill,
            TrainMode::Diversity => LossMode::Diversity,
        }
    }

    pub fn reversed(self) -> bool {
        self == TrainMode::ReverseSchedule
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrainMode::all()
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown mode '{s}' (expected full, no_distill, diversity or reverse_schedule)")))
    }
}

/// Every training knob as one flat record; the config file and the command-line flags use
/// these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub task: TaskKind,
    /// Completion length `L`.
    pub length: usize,
    /// Denoising steps per completion `N`.
    pub steps: usize,
    /// Block length `b`.
    pub block: usize,
    /// Branch factor `B`.
    pub branch: usize,
    /// Tree height `H`.
    pub height: usize,
    pub payload_len: usize,
    pub alphabet: usize,
    pub givens: usize,
    pub operands: usize,
    pub max_operand: u64,
    pub max_target: u64,
    pub binary_reward: bool,

    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_hidden: usize,
    pub init_scale: f64,
    pub head_init: f64,

    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm cap; 0 disables clipping.
    pub grad_clip: f64,

    pub clip_eps: f64,
    pub beta_kl: f64,
    /// Gradient steps per outer step.
    pub mu: usize,
    /// Outer steps `T`.
    pub total_steps: usize,
    pub tau_max: f64,
    pub sched_beta: f64,
    pub lambda_max: f64,
    pub gamma: f64,
    /// Sampling temperature for rollouts.
    pub temperature: f64,

    pub seed: u64,
    pub mode: TrainMode,
    /// Where metrics, the resolved config and checkpoints go; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    /// Checkpoint cadence in outer steps; 0 writes only the final checkpoint.
    pub checkpoint_every: usize,
    /// Start from this checkpoint instead of a fresh initialization.
    pub init_checkpoint: Option<PathBuf>,
    /// Supervised denoising steps on reference solutions before the first rollout; 0 skips
    /// the warm start. The warm-started model is also the KL reference.
    pub pretrain_steps: usize,
    pub pretrain_lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let obj = ObjectiveConfig::default();
        let model = ModelConfig::default();
        Self {
            task: TaskKind::Copy,
            length: 16,
            steps: 8,
            block: 8,
            branch: 3,
            height: 2,
            payload_len: 16,
            alphabet: 4,
            givens: 12,
            operands: 3,
            max_operand: 9,
            max_target: 99,
            binary_reward: false,
            d_model: model.d_model,
            n_layers: model.n_layers,
            n_heads: model.n_heads,
            d_hidden: model.d_hidden,
            init_scale: model.init_scale,
            head_init: model.head_init,
            lr: 3e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: 1.0,
            clip_eps: obj.clip_eps,
            beta_kl: obj.beta_kl,
            mu: 4,
            total_steps: obj.schedule.total_steps,
            tau_max: obj.schedule.tau_max,
            sched_beta: obj.schedule.sched_beta,
            lambda_max: obj.schedule.lambda_max,
            gamma: obj.schedule.gamma,
            temperature: 1.0,
            seed: 0,
            mode: TrainMode::Full,
            out_dir: None,
            checkpoint_every: 0,
            init_checkpoint: None,
            pretrain_steps: 0,
            pretrain_lr: 3e-3,
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn task_spec(&self) -> TaskSpec {
        TaskSpec {
            kind: self.task,
            length: self.length,
            payload_len: self.payload_len,
            alphabet: self.alphabet,
            givens: self.givens,
            operands: self.operands,
            max_operand: self.max_operand,
            max_target: self.max_target,
            binary_reward: self.binary_reward,
        }
    }

    pub fn tree_config(&self) -> TreeConfig {
        TreeConfig { branch: self.branch, height: self.height, steps: self.steps, length: self.length, block: self.block }
    }

    pub fn schedule(&self) -> ScheduleConfig {
        ScheduleConfig {
            tau_max: self.tau_max,
            sched_beta: self.sched_beta,
            lambda_max: self.lambda_max,
            gamma: self.gamma,
            total_steps: self.total_steps,
            reverse: self.mode.reversed(),
        }
    }

    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig { schedule: self.schedule(), beta_kl: self.beta_kl, clip_eps: self.clip_eps }
    }

    /// Longest prompt the task can produce.
    pub fn max_prompt_len(&self) -> usize {
        match self.task {
            TaskKind::Copy | TaskKind::Sort => self.payload_len + 1,
            TaskKind::Sudoku4 => 16,
            // single-digit operands, separators, '=', and the target's digits
            TaskKind::Countdown => 2 * self.operands + self.max_target.max(1).to_string().len(),
        }
    }

    pub fn model_config(&self, seed: u64) -> ModelConfig {
        ModelConfig {
            vocab_size: task_vocabulary().len(),
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_hidden: self.d_hidden,
            max_seq_len: self.max_prompt_len() + self.length,
            init_scale: self.init_scale,
            head_init: self.head_init,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.task_spec().validate()?;
        self.tree_config().validate()?;
        self.objective().validate()?;
        self.model_config(0).validate()?;
        if self.mu == 0 {
            return Err(Error::config("mu must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("lr must be positive, got {}", self.lr)));
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2)) {
            return Err(Error::config("adam_beta1 and adam_beta2 must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::config("adam_eps must be positive"));
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return Err(Error::config("grad_clip must be non-negative"));
        }
        if !(self.pretrain_lr > 0.0 && self.pretrain_lr.is_finite()) {
            return Err(Error::config(format!("pretrain_lr must be positive, got {}", self.pretrain_lr)));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::config("temperature must be non-negative"));
        }
        Ok(())
    }
}
