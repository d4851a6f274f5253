use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dtree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dtree")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Flags for a four-token copy task on a one-layer model.
const TINY: &[&str] = &[
    "--length", "4", "--payload_len", "4", "--steps", "2", "--block", "2", "--branch", "2", "--height", "2",
    "--d_model", "8", "--n_layers", "1", "--n_heads", "2", "--d_hidden", "16",
];

fn train_tiny(dir: &Path, extra: &[&str]) -> Output {
    let out_dir = dir.to_str().unwrap();
    let mut args = vec!["train", "--seed", "1", "--mode", "full", "--out-dir", out_dir];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    dtree(&args)
}

#[test]
fn tree_cost_reports_counts() {
    let out = dtree(&["tree-cost", "--branch", "4", "--height", "2", "--steps", "128", "--length", "256", "--block", "32"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["tree_steps"], 20);
    assert_eq!(v["denoise_steps"], 1280);
    assert_eq!(v["forward_passes_for_update"], 20);

    let bad = dtree(&["tree-cost", "--branch", "2", "--height", "3", "--steps", "256", "--length", "256", "--block", "32"]);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("height 3"));
}

#[test]
fn train_requires_seed_mode_and_out_dir() {
    assert_eq!(code(&dtree(&["train", "--seed", "1", "--mode", "full"])), 1);
    assert_eq!(code(&dtree(&["train", "--mode", "full", "--out-dir", "x"])), 1);
    assert_eq!(code(&dtree(&["train", "--seed", "1", "--mode", "bogus", "--out-dir", "x"])), 1);
    assert_eq!(code(&dtree(&["--help"])), 0);
}

#[test]
fn train_writes_one_record_per_step_and_flags_beat_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("base.toml");
    fs::write(&config, "total_steps = 5\nmu = 2\n").unwrap();
    let run = dir.path().join("run");
    let out = train_tiny(&run, &["--config", config.to_str().unwrap(), "--total_steps", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    let resolved: toml::Table = fs::read_to_string(run.join("config.toml")).unwrap().parse().unwrap();
    assert_eq!(resolved["total_steps"].as_integer(), Some(3));
    assert_eq!(resolved["mu"].as_integer(), Some(2));
    assert_eq!(resolved["seed"].as_integer(), Some(1));
    assert!(run.join("checkpoints/final.ckpt").exists());
    let summary: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(summary["steps"], 3);
}

#[test]
fn unknown_config_keys_and_invalid_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "no_such_key = 1\n").unwrap();
    assert_eq!(code(&train_tiny(&dir.path().join("a"), &["--config", config.to_str().unwrap()])), 1);
    assert_eq!(code(&train_tiny(&dir.path().join("b"), &["--height", "3"])), 1);
    assert_eq!(code(&train_tiny(&dir.path().join("c"), &["--mu", "0"])), 1);
}

#[test]
fn divergence_exits_with_the_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_tiny(dir.path(), &["--lr", "1e308", "--grad_clip", "0", "--total_steps", "20"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("checkpoints/last_good.ckpt").exists());
}

#[test]
fn eval_reads_a_trained_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&train_tiny(dir.path(), &["--total_steps", "2"])), 0);
    let ckpt = dir.path().join("checkpoints/final.ckpt");
    let mut args = vec!["eval", "--checkpoint", ckpt.to_str().unwrap(), "--instances", "10"];
    args.extend_from_slice(TINY);
    let out = dtree(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(report["instances"], 10);
    assert!(report["pass_at_1"].as_f64().unwrap() <= 1.0);
    assert_eq!(stdout(&dtree(&args)), stdout(&out));

    args[4] = "0";
    assert_eq!(code(&dtree(&args)), 1);
    let missing = dtree(&["eval", "--checkpoint", dir.path().join("nope.ckpt").to_str().unwrap()]);
    assert_eq!(code(&missing), 1);
}

#[test]
fn verify_bounds_streams_one_record_per_instance_and_kind() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bounds.jsonl");
    let out = dtree(&["verify-bounds", "--instances", "5", "--seed", "2", "--out", file.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&file).unwrap();
    assert_eq!(text.lines().count(), 15);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["k", "vocab_size", "order", "eps", "log_ratio", "lower_bound", "upper_bound", "status"] {
            assert!(v.get(key).is_some(), "missing {key} in {line}");
        }
        assert_eq!(v["status"], "holds");
    }
    let summary: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(summary["violations"], 0);
    assert_eq!(code(&dtree(&["verify-bounds", "--k-max", "9"])), 1);
}

#[test]
fn ablate_and_plot_produce_tables() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("abl");
    let mut args = vec!["ablate", "--out-dir", root.to_str().unwrap(), "--seeds", "1", "--modes", "full,no_distill", "--total_steps", "2"];
    args.extend_from_slice(TINY);
    let out = dtree(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("no_distill"));
    assert!(root.join("ablation.json").exists());

    let csv = dir.path().join("curves.csv");
    let out = dtree(&["plot", root.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("run,step,mode,mean_tree_reward"));
    assert_eq!(lines.count(), 4);
    assert_eq!(code(&dtree(&["plot", dir.path().join("empty").to_str().unwrap(), "--out", "x.csv"])), 1);
}
