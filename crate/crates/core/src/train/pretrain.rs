use rand::Rng;

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::policy::{compute_gradients, Policy, PolicyModel};
use crate::tasks::{sample_instance, TaskSpec};
use crate::train::Adam;

/// Masked-denoising warm start on reference solutions.
///
/// Each step draws one instance and a mask rate `t ~ U(0, 1]`, masks every completion
/// position independently with probability `t` (at least one), and minimizes the mean
/// cross-entropy of the true tokens at the masked positions. Returns the mean loss of the
/// final tenth of steps.
pub fn pretrain<R: Rng + ?Sized>(model: &mut PolicyModel, spec: &TaskSpec, steps: usize, lr: f64, rng: &mut R) -> Result<f64> {
    let mask = model.mask_id();
    let mut adam = Adam::new(model.params(), lr, 0.9, 0.999, 1e-8, 1.0);
    let tail = (steps / 10).max(1);
    let mut tail_loss = 0.0;
    for step in 0..steps {
        let instance = sample_instance(spec, rng)?;
        let solution = instance.solution();
        let rate: f64 = 1.0 - rng.gen::<f64>();
        let mut masked: Vec<usize> = (0..solution.len()).filter(|_| rng.gen::<f64>() < rate).collect();
        if masked.is_empty() {
            masked.push(rng.gen_range(0..solution.len()));
        }
        let mut input = instance.prompt.clone();
        input.extend_from_slice(&solution);
        for &i in &masked {
            input[instance.prompt.len() + i] = mask;
        }
        let mut g = Graph::new();
        let logits = model.logits_graph(&mut g, &input)?;
        let rows: Vec<usize> = masked.iter().map(|&i| instance.prompt.len() + i).collect();
        let picked = g.pick_rows(logits, &rows);
        let logp = g.log_softmax_rows(picked);
        let entries: Vec<(usize, usize)> = masked.iter().enumerate().map(|(r, &i)| (r, solution[i])).collect();
        let hits = g.pick_entries(logp, &entries);
        let mean = g.mean(hits);
        let loss = g.scale(mean, -1.0);
        let value = g.value(loss).value();
        if !value.is_finite() {
            return Err(Error::numeric("pretrain_loss", format!("non-finite value {value} at step {step}")));
        }
        let grads = compute_gradients(model, &g, loss)?;
        adam.step(model.params_mut(), &grads);
        if step + tail >= steps {
            tail_loss += value;
        }
    }
    Ok(if steps == 0 { 0.0 } else { tail_loss / tail as f64 })
}
