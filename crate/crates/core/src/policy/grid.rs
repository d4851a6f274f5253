use crate::error::{Error, Result};
use crate::tensor::{softmax_in_place, Matrix};

/// One categorical distribution over the vocabulary per sequence position.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionGrid {
    probs: Matrix,
    prompt_len: usize,
}

impl DistributionGrid {
    /// Row-wise softmax of `logits` (`seq_len x V`).
    pub fn from_logits(logits: &Matrix, prompt_len: usize) -> Self {
        let mut probs = logits.clone();
        for i in 0..probs.rows() {
            softmax_in_place(probs.row_mut(i));
        }
        Self { probs, prompt_len }
    }

    /// Wraps explicit probability rows, validating normalization to 1e-9.
    pub fn from_probs(probs: Matrix, prompt_len: usize) -> Result<Self> {
        for i in 0..probs.rows() {
            let row = probs.row(i);
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::contract(format!("row {i} has entries outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::contract(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { probs, prompt_len })
    }

    pub fn rows(&self) -> usize {
        self.probs.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.cols()
    }

    pub fn prompt_len(&self) -> usize {
        self.prompt_len
    }

    /// Distribution at absolute sequence position `pos`.
    pub fn row(&self, pos: usize) -> &[f64] {
        self.probs.row(pos)
    }

    /// Distribution at completion position `i`.
    pub fn completion_row(&self, i: usize) -> &[f64] {
        self.probs.row(self.prompt_len + i)
    }

    pub fn prob(&self, completion_pos: usize, token: usize) -> f64 {
        self.completion_row(completion_pos)[token]
    }

    pub fn probs(&self) -> &Matrix {
        &self.probs
    }
}
