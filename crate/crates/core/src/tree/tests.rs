use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::policy::{ModelConfig, Policy, PolicyModel, Slot};
use crate::vocab::Vocabulary;

fn model(vocab: usize, max_len: usize, head: f64) -> PolicyModel {
    let cfg = ModelConfig {
        vocab_size: vocab,
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        d_hidden: 16,
        max_seq_len: max_len,
        init_scale: 1.0,
        head_init: head,
        seed: 11,
    };
    PolicyModel::new(cfg, Vocabulary::synthetic(vocab).unwrap()).unwrap()
}

fn cfg(branch: usize, height: usize, steps: usize, length: usize, block: usize) -> TreeConfig {
    TreeConfig { branch, height, steps, length, block }
}

/// A hand-made tree: `parents[i]` is the parent of node `i + 1`; leaf `j` decodes to token `j`.
fn manual_tree(parents: &[usize]) -> RolloutTree {
    let n = parents.len() + 1;
    let mut nodes: Vec<TreeNode> = (0..n)
        .map(|id| TreeNode {
            id,
            parent: if id == 0 { None } else { Some(parents[id - 1]) },
            depth: 0,
            state: SequenceState::from_slots(vec![1], vec![Slot::Decoded(id)], 1, usize::MAX).unwrap(),
            children: Vec::new(),
            reward: None,
            decoded_positions: Vec::new(),
            decoded_tokens: Vec::new(),
            old_probs: Vec::new(),
            advantage: None,
        })
        .collect();
    for (i, &p) in parents.iter().enumerate() {
        nodes[p].children.push(i + 1);
    }
    RolloutTree { config: cfg(2, 1, 1, 1, 1), prompt_id: "manual".into(), nodes, measured: MeasuredCost::default() }
}

fn reward_table(table: &[(usize, f64)]) -> impl Fn(&[usize]) -> f64 + '_ {
    move |tokens| table.iter().find(|(id, _)| *id == tokens[0]).unwrap().1
}

#[test]
fn block_alignment_examples() {
    assert!(validate_block_alignment(&cfg(2, 2, 256, 256, 32)).is_ok());
    let msg = validate_block_alignment(&cfg(2, 3, 256, 256, 32)).unwrap_err();
    assert!(msg.contains("8 blocks") && msg.contains('3'), "{msg}");
    assert!(validate_block_alignment(&cfg(2, 4, 64, 64, 16)).is_ok());
}

#[test]
fn config_rejections() {
    assert!(cfg(1, 1, 4, 4, 4).validate().is_err());
    assert!(cfg(2, 3, 4, 12, 4).validate().is_err());
    assert!(cfg(2, 2, 4, 6, 3).validate().is_err());
    assert!(cfg(2, 2, 8, 8, 2).validate().is_ok());
    assert!(cfg(2, 1, 2, 8, 2).validate().is_err());
}

#[test]
fn cost_examples() {
    let c = tree_cost(&cfg(4, 2, 128, 256, 32));
    assert_eq!((c.tree_steps, c.denoise_steps, c.forward_passes_for_update), (20, 1280, 20));
    let c = tree_cost(&cfg(2, 1, 10, 10, 10));
    assert_eq!((c.tree_steps, c.denoise_steps), (2, 20));
    assert_eq!(tree_cost(&cfg(4, 4, 4, 4, 1)).tree_steps, 340);
}

#[test]
fn built_tree_shape_and_accounting() {
    let m = model(8, 10, 1.0);
    let c = cfg(4, 2, 4, 8, 4);
    let tree = build_tree(&m, &[3, 4], "p0", &c, 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(tree.leaves().count(), 16);
    assert_eq!(tree.len() - 1, 20);
    let cost = tree_cost(&c);
    assert_eq!(tree.measured.denoise_calls as u128, cost.denoise_steps);
    assert_eq!(tree.measured.estimator_forwards as u128, cost.forward_passes_for_update);
    for leaf in tree.leaves() {
        assert_eq!(leaf.depth, 2);
        assert!(leaf.state.is_fully_decoded());
    }
    for node in tree.internal() {
        assert_eq!(node.children.len(), 4);
        let first = &tree.node(node.children[0]).decoded_positions;
        assert_eq!(first.len(), c.tokens_per_tree_step());
        for &ch in &node.children {
            assert_eq!(&tree.node(ch).decoded_positions, first);
        }
    }
}

#[test]
fn zero_temperature_collapses_siblings() {
    let m = model(8, 10, 3.0);
    let tree = build_tree(&m, &[3, 4], "p", &cfg(3, 2, 4, 8, 4), 0.0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    for node in tree.internal() {
        let first = &tree.node(node.children[0]).state;
        assert!(node.children.iter().all(|&c| &tree.node(c).state == first));
    }
}

#[test]
fn old_probs_replay_from_parent_forward() {
    let m = model(8, 10, 2.0);
    let tree = build_tree(&m, &[5], "p", &cfg(2, 2, 8, 8, 2), 1.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    for node in tree.nodes.iter().skip(1) {
        let parent = tree.node(node.parent.unwrap());
        let grid = m.forward(&parent.state).unwrap();
        for ((&p, &t), &q) in node.decoded_positions.iter().zip(&node.decoded_tokens).zip(&node.old_probs) {
            assert!((grid.prob(p, t) - q).abs() < 1e-12);
            assert!(q > 0.0 && q <= 1.0);
        }
    }
}

#[test]
fn build_is_reproducible_and_rejects_bad_config_early() {
    let m = model(8, 10, 1.0);
    let c = cfg(2, 2, 4, 8, 4);
    let a = build_tree(&m, &[3], "p", &c, 1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = build_tree(&m, &[3], "p", &c, 1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(a, b);
    let bad = cfg(2, 3, 4, 8, 4);
    assert!(matches!(build_tree(&m, &[3], "p", &bad, 1.0, &mut ChaCha8Rng::seed_from_u64(9)), Err(crate::Error::Config(_))));
    assert!(build_tree(&m, &[3], "p", &c, -1.0, &mut ChaCha8Rng::seed_from_u64(9)).is_err());
}

#[test]
fn reward_examples() {
    let mut t = manual_tree(&[0, 0, 0, 0]);
    propagate_rewards(&mut t, reward_table(&[(1, 1.0), (2, 0.0), (3, 0.0), (4, 1.0)])).unwrap();
    assert_eq!(t.root().reward, Some(0.5));

    let mut t = manual_tree(&[0]);
    propagate_rewards(&mut t, reward_table(&[(1, 0.3)])).unwrap();
    assert_eq!(t.root().reward, Some(0.3));

    let mut t = manual_tree(&[0, 0, 1, 1, 2, 2]);
    propagate_rewards(&mut t, reward_table(&[(3, 1.0), (4, 1.0), (5, 0.0), (6, 0.0)])).unwrap();
    let r: Vec<f64> = t.nodes.iter().map(|n| n.reward.unwrap()).collect();
    assert_eq!(&r[..3], &[0.5, 1.0, 0.0]);
}

#[test]
fn advantage_examples() {
    let mut t = manual_tree(&[0, 0, 0, 0]);
    assert!(matches!(compute_advantages(&mut t), Err(crate::Error::Sequencing(_))));
    propagate_rewards(&mut t, reward_table(&[(1, 1.0), (2, 0.0), (3, 0.0), (4, 1.0)])).unwrap();
    let g = compute_advantages(&mut t).unwrap();
    assert_eq!(g[0].advantages, vec![0.5, -0.5, -0.5, 0.5]);

    let mut t = manual_tree(&[0, 0, 0, 0]);
    propagate_rewards(&mut t, reward_table(&[(1, 1.0), (2, 0.5), (3, 0.0), (4, 0.5)])).unwrap();
    assert_eq!(compute_advantages(&mut t).unwrap()[0].advantages, vec![0.5, 0.0, -0.5, 0.0]);

    let mut t = manual_tree(&[0, 0, 0]);
    propagate_rewards(&mut t, |_: &[usize]| 0.1).unwrap();
    let g = compute_advantages(&mut t).unwrap();
    assert!(g[0].is_zero());
    assert_eq!(t.root().reward, Some(0.1));
}

#[test]
fn verifier_out_of_range_is_a_contract_error() {
    let mut t = manual_tree(&[0, 0]);
    assert!(matches!(propagate_rewards(&mut t, |_: &[usize]| 1.5), Err(crate::Error::Contract(_))));
    assert!(matches!(propagate_rewards(&mut t, |_: &[usize]| f64::NAN), Err(crate::Error::Contract(_))));
}

#[test]
fn dump_round_trips() {
    let m = model(8, 10, 1.0);
    let mut tree = build_tree(&m, &[3], "p", &cfg(2, 2, 4, 8, 4), 1.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    propagate_rewards(&mut tree, |t: &[usize]| (t[0] % 2) as f64).unwrap();
    compute_advantages(&mut tree).unwrap();
    let mut buf = Vec::new();
    write_dump(&tree, &mut buf).unwrap();
    let recs = read_dump(buf.as_slice()).unwrap();
    assert_eq!(recs.len(), tree.len());
    for (r, n) in recs.iter().zip(&tree.nodes) {
        assert_eq!((r.id, r.parent, r.reward, r.advantage), (n.id, n.parent, n.reward, n.advantage));
        assert_eq!(r.old_probs, n.old_probs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reward_algebra_on_built_trees(seed in 0u64..1000, branch in 2usize..4, height in 1usize..3) {
        let m = model(6, 8, 1.0);
        let c = cfg(branch, height, 4, 4, 2);
        let mut tree = build_tree(&m, &[2], "p", &c, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(tree.leaves().count(), branch.pow(height as u32));
        let salt = seed as usize;
        propagate_rewards(&mut tree, |t: &[usize]| ((t.iter().sum::<usize>() + salt) % 5) as f64 / 4.0).unwrap();
        let groups = compute_advantages(&mut tree).unwrap();
        for n in tree.internal() {
            let kids: Vec<f64> = n.children.iter().map(|&c| tree.node(c).reward.unwrap()).collect();
            let mean = kids.iter().sum::<f64>() / kids.len() as f64;
            let tied = kids.iter().all(|&r| r == kids[0]);
            prop_assert!(n.reward.unwrap() == mean || (tied && n.reward.unwrap() == kids[0]));
        }
        for g in &groups {
            prop_assert_eq!(g.advantages.iter().sum::<f64>(), 0.0);
            for (&c, &a) in g.children.iter().zip(&g.advantages) {
                prop_assert!((a - (tree.node(c).reward.unwrap() - g.parent_reward)).abs() < 1e-15);
            }
        }
        prop_assert!((tree.root().reward.unwrap() - tree.mean_leaf_reward().unwrap()).abs() < 1e-12);
    }
}
