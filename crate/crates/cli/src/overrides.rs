//! Command-line flags that mirror the config file keys one to one.

use std::path::Path;

use anyhow::{Context, Result};
use dtree_core::train::TrainConfig;
use toml::{Table, Value};

macro_rules! overrides {
    ($($(#[doc = $doc:expr])* $field:ident: $ty:ty,)*) => {
        /// Every `TrainConfig` key except the mandatory `seed`, `mode` and `out_dir`.
        #[derive(Debug, Default, Clone, clap::Args)]
        pub struct Overrides {
            $(
                $(#[doc = $doc])*
                #[arg(long = stringify!($field), help_heading = "Config overrides")]
                pub $field: Option<$ty>,
            )*
        }

        impl Overrides {
            fn merge_into(&self, table: &mut Table) -> Result<()> {
                $(
                    if let Some(v) = &self.$field {
                        table.insert(stringify!($field).into(), Value::try_from(v)?);
                    }
                )*
                Ok(())
            }
        }
    };
}

overrides! {
    /// copy, sort, sudoku4 or countdown
    task: String,
    /// Completion length L
    length: usize,
    /// Denoising steps N
    steps: usize,
    /// Block length b
    block: usize,
    /// Branch factor B
    branch: usize,
    /// Tree height H
    height: usize,
    payload_len: usize,
    alphabet: usize,
    givens: usize,
    operands: usize,
    max_operand: u64,
    max_target: u64,
    binary_reward: bool,
    d_model: usize,
    n_layers: usize,
    n_heads: usize,
    d_hidden: usize,
    init_scale: f64,
    head_init: f64,
    lr: f64,
    adam_beta1: f64,
    adam_beta2: f64,
    adam_eps: f64,
    grad_clip: f64,
    clip_eps: f64,
    beta_kl: f64,
    /// Gradient steps per outer step
    mu: usize,
    /// Outer steps T
    total_steps: usize,
    tau_max: f64,
    sched_beta: f64,
    lambda_max: f64,
    gamma: f64,
    temperature: f64,
    checkpoint_every: usize,
    init_checkpoint: String,
    pretrain_steps: usize,
    pretrain_lr: f64,
}

/// Config file (if any), then flags, then the explicitly passed `extra` keys.
pub fn resolve(file: Option<&Path>, flags: &Overrides, extra: Table) -> Result<TrainConfig> {
    let mut table = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            text.parse::<Table>().map_err(|e| dtree_core::Error::Config(format!("{}: {e}", path.display())))?
        }
        None => Table::new(),
    };
    flags.merge_into(&mut table)?;
    table.extend(extra);
    let cfg = TrainConfig::from_toml_str(&toml::to_string(&table)?)?;
    cfg.validate()?;
    Ok(cfg)
}
