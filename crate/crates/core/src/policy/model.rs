//! A small bidirectional transformer over token + position embeddings with a tied output head.

use std::cell::Cell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adjoints, Graph, Var};
use crate::error::{Error, Result};
use crate::policy::grid::DistributionGrid;
use crate::policy::state::SequenceState;
use crate::tensor::Matrix;
use crate::vocab::{TokenId, Vocabulary};

/// Anything that maps a token sequence to per-position logits.
pub trait Policy {
    fn vocab_size(&self) -> usize;

    fn mask_id(&self) -> TokenId;

    /// Unnormalized scores, `tokens.len() x vocab_size`.
    fn logits(&self, tokens: &[TokenId]) -> Result<Matrix>;

    fn forward(&self, state: &SequenceState) -> Result<DistributionGrid> {
        let logits = self.logits(&state.model_input(self.mask_id()))?;
        Ok(DistributionGrid::from_logits(&logits, state.prompt_len()))
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn mask_id(&self) -> TokenId {
        (**self).mask_id()
    }
    fn logits(&self, tokens: &[TokenId]) -> Result<Matrix> {
        (**self).logits(tokens)
    }
}

/// Counts forward passes made through the wrapped policy.
pub struct Counting<P> {
    inner: P,
    calls: Cell<usize>,
}

impl<P: Policy> Counting<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, calls: Cell::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }

    pub fn reset(&self) {
        self.calls.set(0);
    }

    pub fn into_inner(self) -> P {
        self.inner
    }
}

impl<P: Policy> Policy for Counting<P> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }
    fn mask_id(&self) -> TokenId {
        self.inner.mask_id()
    }
    fn logits(&self, tokens: &[TokenId]) -> Result<Matrix> {
        self.calls.set(self.calls.get() + 1);
        self.inner.logits(tokens)
    }
}

/// Divides the wrapped policy's logits by `temperature`; below 1 this sharpens every row.
pub struct Sharpened<P> {
    inner: P,
    temperature: f64,
}

impl<P: Policy> Sharpened<P> {
    pub fn new(inner: P, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::config(format!("sharpening temperature must be positive, got {temperature}")));
        }
        Ok(Self { inner, temperature })
    }
}

impl<P: Policy> Policy for Sharpened<P> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }
    fn mask_id(&self) -> TokenId {
        self.inner.mask_id()
    }
    fn logits(&self, tokens: &[TokenId]) -> Result<Matrix> {
        let l = self.inner.logits(tokens)?;
        if self.temperature == 1.0 {
            return Ok(l);
        }
        Ok(l.scale(1.0 / self.temperature))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_hidden: usize,
    pub max_seq_len: usize,
    /// Half-width of the uniform init, divided by `sqrt(fan_in)` for projections.
    pub init_scale: f64,
    /// Initial gain of the final normalization; near zero gives a near-uniform policy.
    pub head_init: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 30,
            d_model: 32,
            n_layers: 2,
            n_heads: 4,
            d_hidden: 64,
            max_seq_len: 64,
            init_scale: 1.0,
            head_init: 1e-6,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 3 {
            return Err(Error::config("vocab_size must be at least 3"));
        }
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.n_layers == 0 || self.d_hidden == 0 || self.max_seq_len == 0 {
            return Err(Error::config("n_layers, d_hidden and max_seq_len must be positive"));
        }
        Ok(())
    }
}

const PER_LAYER: usize = 12;

/// Named parameter arrays in a fixed slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamSet {
    pub fn new(names: Vec<String>, values: Vec<Matrix>) -> Self {
        assert_eq!(names.len(), values.len());
        Self { names, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flat_map(|m| m.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_scalars(), "flat parameter length mismatch");
        let mut off = 0;
        for m in &mut self.values {
            let n = m.len();
            m.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(Matrix::is_finite)
    }
}

/// Gradients congruent to a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub grads: Vec<Matrix>,
}

impl GradientSet {
    pub fn zeros_like(params: &ParamSet) -> Self {
        Self { grads: params.values().iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect() }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.grads.iter().flat_map(|m| m.data().iter().copied()).collect()
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.iter().flat_map(|m| m.data()).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Matrix::is_finite)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    config: ModelConfig,
    vocab: Vocabulary,
    params: ParamSet,
}

impl PolicyModel {
    /// Scaled-uniform initialization from `config.seed`.
    pub fn new(config: ModelConfig, vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        if vocab.len() != config.vocab_size {
            return Err(Error::config(format!(
                "vocabulary has {} tokens but config says {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d_model;
        let h = config.d_hidden;
        let s = config.init_scale;
        let mut uniform = |rows: usize, cols: usize, half: f64| {
            let data = (0..rows * cols).map(|_| rng.gen_range(-half..=half)).collect();
            Matrix::from_vec(rows, cols, data)
        };
        let mut names = Vec::new();
        let mut values = Vec::new();
        let mut add = |n: String, m: Matrix| {
            names.push(n);
            values.push(m);
        };
        add("tok_emb".into(), uniform(config.vocab_size, d, s));
        add("pos_emb".into(), uniform(config.max_seq_len, d, s));
        for l in 0..config.n_layers {
            let proj = s / (d as f64).sqrt();
            add(format!("layer{l}.ln1.gain"), Matrix::filled(1, d, 1.0));
            add(format!("layer{l}.ln1.bias"), Matrix::zeros(1, d));
            add(format!("layer{l}.attn.wq"), uniform(d, d, proj));
            add(format!("layer{l}.attn.wk"), uniform(d, d, proj));
            add(format!("layer{l}.attn.wv"), uniform(d, d, proj));
            add(format!("layer{l}.attn.wo"), uniform(d, d, proj));
            add(format!("layer{l}.ln2.gain"), Matrix::filled(1, d, 1.0));
            add(format!("layer{l}.ln2.bias"), Matrix::zeros(1, d));
            add(format!("layer{l}.mlp.w1"), uniform(d, h, proj));
            add(format!("layer{l}.mlp.b1"), Matrix::zeros(1, h));
            add(format!("layer{l}.mlp.w2"), uniform(h, d, s / (h as f64).sqrt()));
            add(format!("layer{l}.mlp.b2"), Matrix::zeros(1, d));
        }
        add("ln_f.gain".into(), Matrix::filled(1, d, config.head_init));
        add("ln_f.bias".into(), Matrix::zeros(1, d));
        Ok(Self { config, vocab, params: ParamSet::new(names, values) })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub(crate) fn from_parts(config: ModelConfig, vocab: Vocabulary, params: ParamSet) -> Result<Self> {
        let fresh = Self::new(config.clone(), vocab.clone())?;
        if fresh.params.names() != params.names() {
            return Err(Error::Checkpoint("parameter names do not match the architecture".into()));
        }
        for (a, b) in fresh.params.values().iter().zip(params.values()) {
            if a.shape() != b.shape() {
                return Err(Error::Checkpoint("parameter shape does not match the architecture".into()));
            }
        }
        Ok(Self { config, vocab, params })
    }

    /// Records the forward computation on `g` and returns the logits node.
    pub fn logits_graph(&self, g: &mut Graph, tokens: &[TokenId]) -> Result<Var> {
        let cfg = &self.config;
        let n = tokens.len();
        if n == 0 || n > cfg.max_seq_len {
            return Err(Error::config(format!("sequence length {n} outside 1..={}", cfg.max_seq_len)));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= cfg.vocab_size) {
            return Err(Error::config(format!("token {bad} outside vocabulary of size {}", cfg.vocab_size)));
        }
        let p: Vec<Var> = self.params.values().iter().enumerate().map(|(i, m)| g.param(i, m.clone())).collect();
        let d = cfg.d_model;
        let heads = cfg.n_heads;
        let dh = d / heads;
        let positions: Vec<usize> = (0..n).collect();

        let tok = g.gather(p[0], tokens);
        let pos = g.gather(p[1], &positions);
        let mut x = g.add(tok, pos);

        for l in 0..cfg.n_layers {
            let b = 2 + l * PER_LAYER;
            let h = g.layer_norm(x, p[b], p[b + 1]);
            let q = g.matmul(h, p[b + 2]);
            let k = g.matmul(h, p[b + 3]);
            let v = g.matmul(h, p[b + 4]);
            let mut outs = Vec::with_capacity(heads);
            for hd in 0..heads {
                let qh = g.col_slice(q, hd * dh, dh);
                let kh = g.col_slice(k, hd * dh, dh);
                let vh = g.col_slice(v, hd * dh, dh);
                let scores = g.matmul_bt(qh, kh);
                let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
                let attn = g.softmax_rows(scores);
                outs.push(g.matmul(attn, vh));
            }
            let cat = if heads == 1 { outs[0] } else { g.concat_cols(&outs) };
            let proj = g.matmul(cat, p[b + 5]);
            x = g.add(x, proj);

            let h2 = g.layer_norm(x, p[b + 6], p[b + 7]);
            let m1 = g.matmul(h2, p[b + 8]);
            let m1 = g.add_row(m1, p[b + 9]);
            let act = g.gelu(m1);
            let m2 = g.matmul(act, p[b + 10]);
            let m2 = g.add_row(m2, p[b + 11]);
            x = g.add(x, m2);
        }
        let last = 2 + cfg.n_layers * PER_LAYER;
        let hf = g.layer_norm(x, p[last], p[last + 1]);
        // tied head: logits = h E^T
        let logits = g.matmul_bt(hf, p[0]);
        Ok(g.label(logits, "logits"))
    }

    /// Gathers parameter gradients from a backward pass over a graph built with
    /// [`PolicyModel::logits_graph`].
    pub fn collect_gradients(&self, adj: &Adjoints) -> GradientSet {
        GradientSet {
            grads: self.params.values().iter().enumerate().map(|(i, m)| adj.param_sum(i, m.shape())).collect(),
        }
    }
}

impl Policy for PolicyModel {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn mask_id(&self) -> TokenId {
        self.vocab.mask_id()
    }

    fn logits(&self, tokens: &[TokenId]) -> Result<Matrix> {
        let mut g = Graph::new();
        let out = self.logits_graph(&mut g, tokens)?;
        Ok(g.value(out).clone())
    }
}

/// Reverse-mode gradients of the scalar `loss` recorded on `graph`.
pub fn compute_gradients(model: &PolicyModel, graph: &Graph, loss: Var) -> Result<GradientSet> {
    let adj = graph.backward(loss)?;
    let grads = model.collect_gradients(&adj);
    if !grads.is_finite() {
        return Err(Error::numeric("parameter gradients", "non-finite gradient"));
    }
    Ok(grads)
}
