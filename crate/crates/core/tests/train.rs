use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dtree_core::policy::checkpoint;
use dtree_core::policy::{GradientSet, ParamSet};
use dtree_core::tasks::TaskKind;
use dtree_core::tensor::Matrix;
use dtree_core::train::*;
use dtree_core::tree::tree_cost;
use dtree_core::Error;

/// Copy of four symbols with a one-layer model; a step takes a few milliseconds.
fn tiny(steps: usize) -> TrainConfig {
    TrainConfig {
        length: 4,
        payload_len: 4,
        steps: 2,
        block: 2,
        branch: 2,
        height: 2,
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        d_hidden: 16,
        head_init: 1.0,
        total_steps: steps,
        seed: 5,
        ..TrainConfig::default()
    }
}

fn without_timing(m: &[MetricsRecord]) -> Vec<MetricsRecord> {
    m.iter().map(|r| MetricsRecord { timing: PhaseTiming::default(), ..r.clone() }).collect()
}

#[test]
fn config_toml_round_trip_and_rejections() {
    let cfg = TrainConfig { out_dir: Some("runs/a".into()), mode: TrainMode::Diversity, ..tiny(7) };
    let back = TrainConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(TrainConfig::from_toml_str("").unwrap(), TrainConfig::default());
    assert!(matches!(TrainConfig::from_toml_str("no_such_key = 1"), Err(Error::Config(_))));

    assert!(TrainConfig { mu: 0, ..tiny(1) }.validate().is_err());
    assert!(TrainConfig { total_steps: 0, ..tiny(1) }.validate().is_err());
    assert!(TrainConfig { height: 3, ..tiny(1) }.validate().is_err());
    assert!(TrainConfig { lr: 0.0, ..tiny(1) }.validate().is_err());
    assert!(TrainConfig::default().validate().is_ok());
}

#[test]
fn modes_parse_and_map_to_loss_modes() {
    for m in TrainMode::all() {
        assert_eq!(m.name().parse::<TrainMode>().unwrap(), m);
    }
    assert!("reverse".parse::<TrainMode>().is_err());
    assert!(TrainMode::ReverseSchedule.reversed());
    assert_eq!(TrainMode::ReverseSchedule.loss_mode(), dtree_core::objective::LossMode::Full);
    assert!(TrainConfig { mode: TrainMode::ReverseSchedule, ..tiny(1) }.schedule().reverse);
}

#[test]
fn single_step_builds_one_tree_and_updates_once() {
    let cfg = TrainConfig { mu: 1, ..tiny(1) };
    let out = train(&cfg).unwrap();
    assert_eq!(out.metrics.len(), 1);
    let r = &out.metrics[0];
    assert_eq!(r.step, 0);
    assert!(r.eligible_groups > 0, "seed should give a tree with reward spread");
    assert_eq!(r.updates, 1);
    assert_eq!(r.loss.groups, 1);
    assert_ne!(&out.model, &initial_model(&cfg).unwrap());
}

#[test]
fn every_step_pays_exactly_the_tree_cost() {
    let cfg = tiny(4);
    let cost = tree_cost(&cfg.tree_config());
    for r in train(&cfg).unwrap().metrics {
        assert_eq!(r.denoise_calls as u128, cost.denoise_steps);
        assert_eq!(r.estimator_forwards as u128, cost.forward_passes_for_update);
    }
}

#[test]
fn step_indices_are_monotone_and_updates_bounded_by_mu() {
    let cfg = tiny(6);
    let out = train(&cfg).unwrap();
    for (i, r) in out.metrics.iter().enumerate() {
        assert_eq!(r.step, i);
        assert!(r.updates == 0 || r.updates == cfg.mu);
        assert_eq!(r.updates == 0, r.eligible_groups == 0);
        assert!((0.0..=1.0).contains(&r.mean_tree_reward));
    }
}

#[test]
fn no_distill_never_has_a_distill_term() {
    let cfg = TrainConfig { mode: TrainMode::NoDistill, ..tiny(5) };
    for r in train(&cfg).unwrap().metrics {
        assert_eq!(r.loss.distill_term, 0.0);
    }
}

#[test]
fn metrics_replay_under_a_fixed_seed() {
    let cfg = tiny(4);
    let a = train(&cfg).unwrap();
    let b = train(&cfg).unwrap();
    assert_eq!(without_timing(&a.metrics), without_timing(&b.metrics));
    assert_eq!(a.model, b.model);
    let c = train(&TrainConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(without_timing(&a.metrics), without_timing(&c.metrics));
}

#[test]
fn outputs_round_trip_and_checkpoint_evaluates_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig { out_dir: Some(dir.path().to_path_buf()), checkpoint_every: 2, ..tiny(4) };
    let out = train(&cfg).unwrap();
    assert_eq!(read_metrics(&dir.path().join("metrics.jsonl")).unwrap(), out.metrics);
    assert_eq!(TrainConfig::from_file(&dir.path().join("config.toml")).unwrap(), cfg);
    for name in ["step_000002", "step_000004", "final"] {
        assert!(dir.path().join("checkpoints").join(format!("{name}.ckpt")).exists(), "{name}");
    }
    let loaded = checkpoint::load(&dir.path().join("checkpoints/final.ckpt")).unwrap();
    assert_eq!(loaded, out.model);
    let spec = cfg.task_spec();
    let a = evaluate(&out.model, &spec, 20, 3, cfg.steps, cfg.block).unwrap();
    let b = evaluate(&loaded, &spec, 20, 3, cfg.steps, cfg.block).unwrap();
    assert_eq!(a, b);
}

#[test]
fn resuming_from_a_checkpoint_starts_from_its_weights() {
    let dir = tempfile::tempdir().unwrap();
    let first = train(&TrainConfig { out_dir: Some(dir.path().to_path_buf()), ..tiny(2) }).unwrap();
    let cfg = TrainConfig { init_checkpoint: Some(dir.path().join("checkpoints/final.ckpt")), ..tiny(2) };
    assert_eq!(initial_model(&cfg).unwrap(), first.model);
    let other = TrainConfig { task: TaskKind::Sudoku4, length: 16, steps: 8, block: 8, ..cfg };
    assert!(matches!(initial_model(&other), Err(Error::Checkpoint(_))));
}

#[test]
fn divergence_aborts_and_keeps_the_last_good_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig { out_dir: Some(dir.path().to_path_buf()), lr: 1e308, grad_clip: 0.0, ..tiny(20) };
    let err = train(&cfg).err().expect("an absurd step size must blow up");
    assert!(matches!(err, Error::Numeric { .. }), "{err}");
    let kept = checkpoint::load(&dir.path().join("checkpoints/last_good.ckpt")).unwrap();
    assert!(kept.params().is_finite());
}

#[test]
fn evaluate_contract() {
    let cfg = tiny(1);
    let model = initial_model(&cfg).unwrap();
    let spec = cfg.task_spec();
    assert!(matches!(evaluate(&model, &spec, 0, 0, 2, 2), Err(Error::Config(_))));
    let a = evaluate(&model, &spec, 10, 7, 2, 2).unwrap();
    assert_eq!(a, evaluate(&model, &spec, 10, 7, 2, 2).unwrap());
    assert_eq!(a.instances, 10);
    assert_eq!(a.pass_at_1, a.solved as f64 / 10.0);

    let alien = dtree_core::policy::PolicyModel::new(
        dtree_core::policy::ModelConfig { vocab_size: 29, max_seq_len: 16, ..Default::default() },
        dtree_core::vocab::Vocabulary::synthetic(29).unwrap(),
    )
    .unwrap();
    assert!(matches!(evaluate(&alien, &spec, 1, 0, 2, 2), Err(Error::Checkpoint(_))));
}

#[test]
fn untrained_model_rarely_solves_sudoku() {
    let (spec, n, b) = dtree_core::tasks::TaskSpec::default_for(TaskKind::Sudoku4);
    let cfg = TrainConfig { task: TaskKind::Sudoku4, ..TrainConfig::default() };
    let model = initial_model(&cfg).unwrap();
    let r = evaluate(&model, &spec, 100, 0, n, b).unwrap();
    assert!(r.pass_at_1 <= 0.05, "{r:?}");
}

#[test]
fn warm_start_lowers_denoising_loss() {
    let cfg = tiny(1);
    let mut model = initial_model(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let early = pretrain(&mut model.clone(), &cfg.task_spec(), 20, 3e-3, &mut rng).unwrap();
    let late = pretrain(&mut model, &cfg.task_spec(), 400, 3e-3, &mut rng).unwrap();
    assert!(late < early, "{late} vs {early}");
    let warm = initial_model(&TrainConfig { pretrain_steps: 10, ..cfg.clone() }).unwrap();
    assert_ne!(warm, initial_model(&cfg).unwrap());
}

#[test]
fn bound_verification_has_no_violations() {
    let cfg = BoundsConfig { instances: 40, seed: 3, ..BoundsConfig::default() };
    let mut lines = 0;
    let summary = verify_bounds(&cfg, |r| {
        lines += 1;
        assert!((2..=5).contains(&r.report.k) && (3..=6).contains(&r.report.vocab_size));
        Ok(())
    })
    .unwrap();
    assert_eq!(lines, 120);
    assert_eq!(summary.count, 120);
    assert!(summary.passed(), "{summary:?}");
    let worst = summary.worst.as_ref().unwrap();
    assert_eq!(worst.report.log_ratio.abs(), summary.max_abs_log_ratio);
    assert!(summary.max_abs_log_ratio <= worst.report.log_upper());

    assert!(verify_bounds(&BoundsConfig { k_max: 8, ..cfg.clone() }, |_| Ok(())).is_err());
    assert!(verify_bounds(&BoundsConfig { instances: 0, ..cfg }, |_| Ok(())).is_err());
}

#[test]
fn slope_recovers_a_line() {
    let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 0.5 - 0.25 * i as f64)).collect();
    assert!((slope(&pts) + 0.25).abs() < 1e-12);
    assert_eq!(slope(&[(1.0, 2.0)]), 0.0);
    assert_eq!(slope(&[(1.0, 2.0), (1.0, 3.0)]), 0.0);
}

#[test]
fn ablation_runs_every_arm_with_shared_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = AblationConfig {
        base: TrainConfig { out_dir: Some(dir.path().to_path_buf()), ..tiny(3) },
        modes: vec![TrainMode::Full, TrainMode::NoDistill],
        seeds: vec![1, 2],
    };
    let report = ablate(&cfg).unwrap();
    assert_eq!(report.runs.len(), 4);
    assert_eq!(report.arms.len(), 2);
    assert!(dir.path().join("no_distill/seed_2/metrics.jsonl").exists());
    let table = report.table();
    assert!(table.contains("full") && table.contains("no_distill"));
    // arms share rollouts at the first step, before any update has happened
    let first = |mode, seed| report.runs.iter().find(|r| r.mode == mode && r.seed == seed).unwrap().metrics[0].clone();
    assert_eq!(first(TrainMode::Full, 1).mean_tree_reward, first(TrainMode::NoDistill, 1).mean_tree_reward);
    assert!(ablate(&AblationConfig { seeds: vec![], ..cfg }).is_err());
}

#[test]
fn adam_minimizes_a_quadratic_and_clips() {
    let mut params = ParamSet::new(vec!["w".into()], vec![Matrix::from_vec(1, 2, vec![3.0, -2.0])]);
    let mut adam = Adam::new(&params, 0.1, 0.9, 0.999, 1e-8, 0.0);
    for _ in 0..500 {
        let w = params.values()[0].data().to_vec();
        let grads = GradientSet { grads: vec![Matrix::from_vec(1, 2, vec![2.0 * w[0], 2.0 * w[1]])] };
        adam.step(&mut params, &grads);
    }
    assert!(params.values()[0].data().iter().all(|x| x.abs() < 1e-2));
    assert_eq!(adam.steps_taken(), 500);

    // first bias-corrected step moves each coordinate by lr regardless of scale or clipping
    let mut p = ParamSet::new(vec!["w".into()], vec![Matrix::from_vec(1, 1, vec![0.0])]);
    let mut clipped = Adam::new(&p, 0.5, 0.9, 0.999, 0.0, 1e-3);
    let norm = clipped.step(&mut p, &GradientSet { grads: vec![Matrix::from_vec(1, 1, vec![40.0])] });
    assert_eq!(norm, 40.0);
    assert!((p.values()[0].data()[0] + 0.5).abs() < 1e-12);
}
