//! `dtree`: train, evaluate and audit tree-structured policy optimization runs.
//!
//! Exit status: 0 success, 1 configuration or I/O error, 2 numeric abort, 3 bound violation.

mod overrides;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use dtree_core::policy::checkpoint;
use dtree_core::train::{
    ablate, evaluate, read_metrics, train_with, verify_bounds, AblationConfig, BoundsConfig, MetricsRecord, TrainMode,
    FINAL_FRACTION,
};
use dtree_core::tree::{tree_cost, TreeConfig};
use serde_json::json;
use toml::{Table, Value};

use overrides::{resolve, Overrides};

#[derive(Parser)]
#[command(name = "dtree", version, about = "Tree-structured policy optimization for toy masked-diffusion models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the training loop and write metrics, the resolved config and checkpoints.
    Train {
        /// TOML file of config keys; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        /// full, no_distill, diversity or reverse_schedule
        #[arg(long)]
        mode: TrainMode,
        #[arg(long = "out-dir", alias = "out_dir")]
        out_dir: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Greedy pass@1 of a checkpoint on freshly generated instances.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Task settings; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        /// Instance seeds are `seed, seed + 1, ...`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check the single-pass estimate against exact enumeration on random instances.
    VerifyBounds {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "k-min", default_value_t = 2)]
        k_min: usize,
        #[arg(long = "k-max", default_value_t = 5)]
        k_max: usize,
        #[arg(long = "vocab-min", default_value_t = 3)]
        vocab_min: usize,
        #[arg(long = "vocab-max", default_value_t = 6)]
        vocab_max: usize,
        #[arg(long, default_value_t = dtree_core::estimator::DEFAULT_ENUMERATION_CAP)]
        cap: usize,
        /// Record stream destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every mode under every seed and compare final-phase statistics.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "out-dir", alias = "out_dir")]
        out_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "full,no_distill,diversity,reverse_schedule")]
        modes: Vec<TrainMode>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Predicted compute of one outer step.
    TreeCost {
        #[arg(long)]
        branch: usize,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        length: usize,
        #[arg(long)]
        block: usize,
    },
    /// Flatten metrics streams into one CSV of reward, entropy, loss and schedule curves.
    Plot {
        /// Metrics files, or directories searched for `metrics.jsonl`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Distinguishes a completed check that found violations from a failed command.
struct BoundViolations(usize);

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(BoundViolations(n))) => {
            eprintln!("error: {n} bound violations");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<dtree_core::Error>() {
                Some(dtree_core::Error::Numeric { .. }) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(command: Command) -> Result<Option<BoundViolations>> {
    match command {
        Command::Train { config, seed, mode, out_dir, overrides } => {
            let mut extra = Table::new();
            extra.insert("seed".into(), Value::try_from(seed)?);
            extra.insert("mode".into(), Value::String(mode.name().into()));
            extra.insert("out_dir".into(), Value::try_from(&out_dir)?);
            let cfg = resolve(config.as_deref(), &overrides, extra)?;
            let outcome = train_with(&cfg, |r| {
                log::debug!("{}", serde_json::to_string(r).unwrap_or_default());
            })?;
            let tail = final_phase(&outcome.metrics);
            println!(
                "{}",
                json!({
                    "steps": outcome.metrics.len(),
                    "final_mean_tree_reward": mean(tail.iter().map(|r| r.mean_tree_reward)),
                    "final_masked_entropy": mean(tail.iter().map(|r| r.masked_entropy)),
                    "out_dir": out_dir,
                })
            );
        }
        Command::Eval { checkpoint: path, config, instances, seed, overrides } => {
            let cfg = resolve(config.as_deref(), &overrides, Table::new())?;
            let model = checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
            let report = evaluate(&model, &cfg.task_spec(), instances, seed, cfg.steps, cfg.block)?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::VerifyBounds { instances, seed, k_min, k_max, vocab_min, vocab_max, cap, out } => {
            let cfg = BoundsConfig { instances, k_min, k_max, vocab_min, vocab_max, seed, cap };
            let mut sink: Box<dyn Write> = match &out {
                Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
                None => Box::new(BufWriter::new(io::stdout().lock())),
            };
            let summary = verify_bounds(&cfg, |r| {
                serde_json::to_writer(&mut sink, r)?;
                sink.write_all(b"\n")?;
                Ok(())
            })?;
            sink.flush()?;
            drop(sink);
            eprintln!("{}", serde_json::to_string(&summary)?);
            if !summary.passed() {
                return Ok(Some(BoundViolations(summary.violations)));
            }
        }
        Command::Ablate { config, out_dir, seeds, modes, overrides } => {
            let mut extra = Table::new();
            extra.insert("out_dir".into(), Value::try_from(&out_dir)?);
            let base = resolve(config.as_deref(), &overrides, extra)?;
            let report = ablate(&AblationConfig { base, modes, seeds })?;
            let runs: Vec<_> = report
                .runs
                .iter()
                .map(|r| json!({ "mode": r.mode, "seed": r.seed, "summary": r.summary }))
                .collect();
            fs::write(out_dir.join("ablation.json"), serde_json::to_string_pretty(&json!({ "arms": report.arms, "runs": runs }))?)?;
            let table = report.table();
            fs::write(out_dir.join("ablation.txt"), &table)?;
            print!("{table}");
        }
        Command::TreeCost { branch, height, steps, length, block } => {
            let cfg = TreeConfig { branch, height, steps, length, block };
            cfg.validate()?;
            println!("{}", serde_json::to_string(&tree_cost(&cfg))?);
        }
        Command::Plot { inputs, out } => {
            let mut files = Vec::new();
            for input in &inputs {
                collect_metrics(input, &mut files)?;
            }
            if files.is_empty() {
                return Err(dtree_core::Error::Config("no metrics.jsonl found under the given inputs".into()).into());
            }
            write_csv(&files, &out)?;
        }
    }
    Ok(None)
}

fn final_phase(metrics: &[MetricsRecord]) -> &[MetricsRecord] {
    let n = ((metrics.len() as f64 * FINAL_FRACTION).ceil() as usize).clamp(1.min(metrics.len()), metrics.len());
    &metrics[metrics.len() - n..]
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n.max(1) as f64
}

fn collect_metrics(path: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_file() {
        files.push(path.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> =
        fs::read_dir(path).with_context(|| format!("reading {}", path.display()))?.map(|e| Ok(e?.path())).collect::<Result<_>>()?;
    entries.sort();
    for entry in entries {
        if entry.is_dir() {
            collect_metrics(&entry, files)?;
        } else if entry.file_name().is_some_and(|n| n == "metrics.jsonl") {
            files.push(entry);
        }
    }
    Ok(())
}

fn write_csv(files: &[PathBuf], out: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(out)?;
    w.write_record([
        "run", "step", "mode", "mean_tree_reward", "root_reward", "masked_entropy", "pg_term", "kl_term", "distill_term",
        "total", "tau", "lambda",
    ])?;
    for file in files {
        let run = file.parent().map(|p| p.display().to_string()).unwrap_or_default();
        for r in read_metrics(file)? {
            w.write_record([
                run.clone(),
                r.step.to_string(),
                r.mode.clone(),
                r.mean_tree_reward.to_string(),
                r.root_reward.to_string(),
                r.masked_entropy.to_string(),
                r.loss.pg_term.to_string(),
                r.loss.kl_term.to_string(),
                r.loss.distill_term.to_string(),
                r.loss.total.to_string(),
                r.tau.to_string(),
                r.lambda.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
