use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::policy::decode::{inverse_cdf, rank_by_confidence, tempered_weights};
use crate::tensor::Matrix;
use crate::vocab::Vocabulary;

fn toy(vocab: usize, seed: u64, head_init: f64) -> PolicyModel {
    let cfg = ModelConfig {
        vocab_size: vocab,
        d_model: 8,
        n_layers: 2,
        n_heads: 2,
        d_hidden: 12,
        max_seq_len: 16,
        init_scale: 1.0,
        head_init,
        seed,
    };
    PolicyModel::new(cfg, Vocabulary::synthetic(vocab).unwrap()).unwrap()
}

/// Straight-line recomputation of the transformer with nested `Vec`s.
fn oracle_logits(model: &PolicyModel, tokens: &[usize]) -> Vec<Vec<f64>> {
    let cfg = model.config();
    let p = |name: &str| -> Vec<Vec<f64>> {
        let m = model.params().get(name).unwrap();
        (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
    };
    let mm = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        a.iter()
            .map(|row| (0..b[0].len()).map(|j| (0..row.len()).map(|k| row[k] * b[k][j]).sum()).collect())
            .collect()
    };
    let ln = |x: &Vec<Vec<f64>>, g: &Vec<f64>, b: &Vec<f64>| -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| {
                let n = row.len() as f64;
                let mu = row.iter().sum::<f64>() / n;
                let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
                row.iter().enumerate().map(|(j, v)| (v - mu) / (var + 1e-5).sqrt() * g[j] + b[j]).collect()
            })
            .collect()
    };
    let tok = p("tok_emb");
    let pos = p("pos_emb");
    let mut x: Vec<Vec<f64>> =
        tokens.iter().enumerate().map(|(i, &t)| tok[t].iter().zip(&pos[i]).map(|(a, b)| a + b).collect()).collect();
    let dh = cfg.d_model / cfg.n_heads;
    for l in 0..cfg.n_layers {
        let pre = format!("layer{l}.");
        let h = ln(&x, &p(&(pre.clone() + "ln1.gain"))[0], &p(&(pre.clone() + "ln1.bias"))[0]);
        let q = mm(&h, &p(&(pre.clone() + "attn.wq")));
        let k = mm(&h, &p(&(pre.clone() + "attn.wk")));
        let v = mm(&h, &p(&(pre.clone() + "attn.wv")));
        let n = tokens.len();
        let mut cat = vec![vec![0.0; cfg.d_model]; n];
        for hd in 0..cfg.n_heads {
            for i in 0..n {
                let mut s: Vec<f64> = (0..n)
                    .map(|j| (0..dh).map(|c| q[i][hd * dh + c] * k[j][hd * dh + c]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = s.iter().map(|v| (v - mx).exp()).sum();
                s.iter_mut().for_each(|v| *v = (*v - mx).exp() / z);
                for c in 0..dh {
                    cat[i][hd * dh + c] = (0..n).map(|j| s[j] * v[j][hd * dh + c]).sum();
                }
            }
        }
        let o = mm(&cat, &p(&(pre.clone() + "attn.wo")));
        for i in 0..n {
            for j in 0..cfg.d_model {
                x[i][j] += o[i][j];
            }
        }
        let h2 = ln(&x, &p(&(pre.clone() + "ln2.gain"))[0], &p(&(pre.clone() + "ln2.bias"))[0]);
        let b1 = &p(&(pre.clone() + "mlp.b1"))[0];
        let mut a = mm(&h2, &p(&(pre.clone() + "mlp.w1")));
        for row in a.iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                let u = *v + b1[j];
                *v = 0.5 * u * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (u + 0.044715 * u.powi(3))).tanh());
            }
        }
        let b2 = &p(&(pre.clone() + "mlp.b2"))[0];
        let m2 = mm(&a, &p(&(pre + "mlp.w2")));
        for i in 0..n {
            for j in 0..cfg.d_model {
                x[i][j] += m2[i][j] + b2[j];
            }
        }
    }
    let hf = ln(&x, &p("ln_f.gain")[0], &p("ln_f.bias")[0]);
    hf.iter().map(|row| tok.iter().map(|e| row.iter().zip(e).map(|(a, b)| a * b).sum()).collect()).collect()
}

#[test]
fn fresh_model_is_near_uniform() {
    let m = toy(9, 3, 1e-6);
    let s = SequenceState::masked(vec![4, 5, 6], 6, 3).unwrap();
    let g = m.forward(&s).unwrap();
    for r in 0..g.rows() {
        for &p in g.row(r) {
            assert!((p - 1.0 / 9.0).abs() < 1e-6, "{p}");
        }
    }
}

#[test]
fn forward_is_deterministic() {
    let m = toy(7, 11, 1.0);
    let s = SequenceState::masked(vec![2, 3], 4, 2).unwrap().with_revealed(&[1], &[5]).unwrap();
    assert_eq!(m.forward(&s).unwrap(), m.forward(&s).unwrap());
}

#[test]
fn forward_matches_straight_line_recomputation() {
    let m = toy(6, 21, 1.0);
    let tokens = [2, 5, 3, 0, 0, 4, 0];
    let got = m.logits(&tokens).unwrap();
    let want = oracle_logits(&m, &tokens);
    for (i, row) in want.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            assert!((got.get(i, j) - w).abs() < 1e-9, "({i},{j}) {} vs {w}", got.get(i, j));
        }
    }
}

#[test]
fn forward_rejects_oversized_sequences() {
    let m = toy(6, 1, 1.0);
    let s = SequenceState::masked(vec![2; 10], 8, 4).unwrap();
    assert!(matches!(m.forward(&s), Err(crate::Error::Config(_))));
}

/// Grid with chosen completion rows over a 4-token vocabulary (mask = 0).
fn fixed_grid(rows: &[[f64; 4]]) -> DistributionGrid {
    DistributionGrid::from_probs(Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()), 0).unwrap()
}

#[test]
fn greedy_step_decodes_most_confident_position_to_argmax() {
    let grid = fixed_grid(&[[0.1, 0.3, 0.3, 0.3], [0.0, 0.1, 0.8, 0.1], [0.1, 0.5, 0.2, 0.2], [0.0, 0.7, 0.2, 0.1]]);
    let s = SequenceState::masked(vec![], 4, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let next = decode_from_grid(&grid, &s, 1, 0.0, 0, &mut rng).unwrap();
    assert_eq!(next.completion()[1], Slot::Decoded(2));
    assert_eq!(next.decoded_count(), 1);
    // tie on confidence 0.3 at position 0 among tokens 1..3 resolves to lowest token
    let all = decode_from_grid(&grid, &s, 4, 0.0, 0, &mut rng).unwrap();
    assert_eq!(all.completion_tokens().unwrap(), vec![1, 2, 1, 1]);
}

#[test]
fn full_decode_in_one_call() {
    let m = toy(6, 2, 1.0);
    let s = SequenceState::masked(vec![3], 5, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = denoise_step(&m, &s, 5, 0.0, &mut rng).unwrap();
    assert!(out.is_fully_decoded());
    assert!(out.completion_tokens().unwrap().iter().all(|&t| t != 0));
    assert!(matches!(denoise_step(&m, &out, 1, 0.0, &mut rng), Err(crate::Error::InvalidCall(_))));
}

#[test]
fn tempered_sampling_replays_inverse_cdf_trace() {
    use rand::Rng;
    let m = toy(7, 5, 2.0);
    let s = SequenceState::masked(vec![2, 3, 4], 6, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let out = denoise_step(&m, &s, 3, 1.0, &mut rng).unwrap();

    let grid = m.forward(&s).unwrap();
    let mut replay = ChaCha8Rng::seed_from_u64(77);
    for pos in rank_by_confidence(&grid, &s).into_iter().take(3) {
        let row = grid.completion_row(pos);
        // temperature 1: renormalize without the mask token
        let z: f64 = row.iter().enumerate().filter(|(v, _)| *v != 0).map(|(_, p)| p).sum();
        let u: f64 = replay.gen();
        let mut acc = 0.0;
        let mut pick = None;
        for (v, &p) in row.iter().enumerate().skip(1) {
            acc += p / z;
            if u < acc {
                pick = Some(v);
                break;
            }
        }
        assert_eq!(out.completion()[pos], Slot::Decoded(pick.unwrap()));
    }
}

#[test]
fn generate_step_accounting_and_block_order() {
    let m = Counting::new(toy(6, 8, 1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let out = generate(&m, &[2, 3], DecodeSchedule::new(8, 8, 8).unwrap(), 1.0, &mut rng).unwrap();
    assert!(out.is_fully_decoded());
    assert_eq!(m.calls(), 8);

    // L=8, N=4, b=4: two tokens per step, block 1 untouched until block 0 completes
    let sched = DecodeSchedule::new(8, 4, 4).unwrap();
    let mut s = SequenceState::masked(vec![2, 3], 8, 4).unwrap();
    for step in 0..4 {
        s = denoise_step(&m, &s, sched.tokens_per_step(), 1.0, &mut rng).unwrap();
        let second_block_decoded = (4..8).filter(|&i| !s.completion()[i].is_masked()).count();
        if step < 2 {
            assert_eq!(second_block_decoded, 0);
        }
        assert_eq!(s.decoded_count(), 2 * (step + 1));
    }
}

#[test]
fn schedule_rejects_indivisible_configurations() {
    assert!(DecodeSchedule::new(8, 3, 8).is_err());
    assert!(DecodeSchedule::new(8, 4, 3).is_err());
    assert!(DecodeSchedule::new(8, 2, 2).is_err()); // 4 tokens per step do not fit a block of 2
    assert_eq!(DecodeSchedule::new(16, 8, 8).unwrap().steps_per_block(), 4);
}

#[test]
fn tempered_weights_and_cdf_edges() {
    let w = tempered_weights(&[0.5, 0.25, 0.25], 1.0, 0);
    assert_eq!(w, vec![0.0, 0.5, 0.5]);
    assert_eq!(inverse_cdf(&w, 0.0), 1);
    assert_eq!(inverse_cdf(&w, 0.999_999), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forward_rows_are_probability_vectors(seed in 0u64..1000, vocab in 3usize..9, plen in 0usize..4, reveal in 0usize..4) {
        let m = toy(vocab, seed, 3.0);
        let mut s = SequenceState::masked((0..plen).map(|i| 1 + i % (vocab - 1)).collect(), 4, 4).unwrap();
        let pos: Vec<usize> = (0..reveal).collect();
        let toks: Vec<usize> = (0..reveal).map(|i| 1 + (seed as usize + i) % (vocab - 1)).collect();
        s = s.with_revealed(&pos, &toks).unwrap();
        let g = m.forward(&s).unwrap();
        for r in 0..g.rows() {
            let row = g.row(r);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn denoise_only_touches_masked_active_block(seed in 0u64..500, count in 1usize..3, temp in 0.0f64..2.0) {
        let m = toy(6, seed, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = SequenceState::masked(vec![2, 3], 6, 3).unwrap();
        s = denoise_step(&m, &s, 1, temp, &mut rng).unwrap();
        let before = s.clone();
        let active = s.active_block().unwrap();
        let avail = s.masked_in_active_block().len();
        prop_assume!(count <= avail);
        let after = denoise_step(&m, &s, count, temp, &mut rng).unwrap();
        let newly = before.newly_decoded(&after);
        prop_assert_eq!(newly.len(), count);
        prop_assert!(newly.iter().all(|&p| p / 3 == active));
        for i in 0..6 {
            if let Slot::Decoded(t) = before.completion()[i] {
                prop_assert_eq!(after.completion()[i], Slot::Decoded(t));
            }
        }
    }

    #[test]
    fn generation_is_reproducible(seed in 0u64..200) {
        let m = toy(6, 4, 2.0);
        let sched = DecodeSchedule::new(6, 3, 6).unwrap();
        let a = generate(&m, &[2], sched, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = generate(&m, &[2], sched, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(a, b);
    }
}
