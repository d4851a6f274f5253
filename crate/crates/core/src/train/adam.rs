use crate::policy::{GradientSet, ParamSet};
use crate::tensor::Matrix;

/// Adam with bias-corrected moments and optional global-norm gradient clipping.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub grad_clip: f64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: u32,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64, beta1: f64, beta2: f64, eps: f64, grad_clip: f64) -> Self {
        let zeros = || params.values().iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self { lr, beta1, beta2, eps, grad_clip, m: zeros(), v: zeros(), t: 0 }
    }

    pub fn steps_taken(&self) -> u32 {
        self.t
    }

    /// Applies one update and returns the pre-clipping gradient norm.
    pub fn step(&mut self, params: &mut ParamSet, grads: &GradientSet) -> f64 {
        let norm = grads.global_norm();
        let scale = if self.grad_clip > 0.0 && norm > self.grad_clip { self.grad_clip / norm } else { 1.0 };
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.values_mut().iter_mut().zip(&grads.grads).zip(&mut self.m).zip(&mut self.v) {
            for (((pi, &gi), mi), vi) in
                p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut())
            {
                let gi = gi * scale;
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                *pi -= self.lr * (*mi / c1) / ((*vi / c2).sqrt() + self.eps);
            }
        }
        norm
    }
}
