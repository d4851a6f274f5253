use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::objective::weights::{negative_group_weights, positive_group_weights, target_distribution, TargetDistribution};
use crate::objective::{lambda_schedule, tau_schedule, LossGroup, ScheduleConfig};
use crate::policy::{Policy, PolicyModel};
use crate::tensor::{log_sum_exp, Matrix};

/// Which auxiliary term joins the clipped policy-gradient loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Self-distillation toward the positive-advantage vote.
    Full,
    NoDistill,
    /// Negated KL to the negative-advantage vote.
    Diversity,
}

impl LossMode {
    pub fn name(self) -> &'static str {
        match self {
            LossMode::Full => "full",
            LossMode::NoDistill => "no_distill",
            LossMode::Diversity => "diversity",
        }
    }

    pub fn all() -> [LossMode; 3] {
        [LossMode::Full, LossMode::NoDistill, LossMode::Diversity]
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(LossMode::Full),
            "no_distill" => Ok(LossMode::NoDistill),
            "diversity" => Ok(LossMode::Diversity),
            other => Err(Error::config(format!("unknown mode '{other}' (expected full, no_distill or diversity)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub schedule: ScheduleConfig,
    pub beta_kl: f64,
    pub clip_eps: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self { schedule: ScheduleConfig::default(), beta_kl: 0.01, clip_eps: 0.2 }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.beta_kl >= 0.0 && self.beta_kl.is_finite()) {
            return Err(Error::config(format!("beta_kl must be non-negative, got {}", self.beta_kl)));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::config(format!("clip_eps must lie in (0, 1), got {}", self.clip_eps)));
        }
        Ok(())
    }
}

/// Scalar terms of the objective. `total = -pg_term + beta_kl * kl_term + distill_term`, where
/// `distill_term` holds the diversity term in diversity mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub pg_term: f64,
    pub kl_term: f64,
    pub distill_term: f64,
    pub total: f64,
    pub groups: usize,
    /// Groups whose auxiliary term was skipped for lack of eligible children.
    pub distill_skipped: usize,
}

impl LossBreakdown {
    /// Running sum over groups; divide by `groups` for means.
    pub fn accumulate(&mut self, other: &LossBreakdown) {
        self.pg_term += other.pg_term;
        self.kl_term += other.kl_term;
        self.distill_term += other.distill_term;
        self.total += other.total;
        self.groups += other.groups;
        self.distill_skipped += other.distill_skipped;
    }

    pub fn mean(&self) -> LossBreakdown {
        let n = self.groups.max(1) as f64;
        LossBreakdown {
            pg_term: self.pg_term / n,
            kl_term: self.kl_term / n,
            distill_term: self.distill_term / n,
            total: self.total / n,
            ..*self
        }
    }
}

/// Log-softmax rows of the current policy at the group's positions, `k x V`.
pub fn group_log_probs(model: &PolicyModel, g: &mut Graph, group: &LossGroup) -> Result<Var> {
    let input = group.parent_state.model_input(model.mask_id());
    let logits = model.logits_graph(g, &input)?;
    let rows: Vec<usize> = group.positions.iter().map(|&p| group.parent_state.prompt_len() + p).collect();
    let picked = g.pick_rows(logits, &rows);
    let logp = g.log_softmax_rows(picked);
    Ok(g.label(logp, "group log-probs"))
}

/// Log-softmax rows of a frozen policy at the group's positions, without a graph.
pub fn reference_log_probs<P: Policy + ?Sized>(policy: &P, group: &LossGroup) -> Result<Matrix> {
    let logits = policy.logits(&group.parent_state.model_input(policy.mask_id()))?;
    let rows: Vec<Vec<f64>> = group
        .positions
        .iter()
        .map(|&p| {
            let row = logits.row(group.parent_state.prompt_len() + p);
            let lse = log_sum_exp(row);
            row.iter().map(|x| x - lse).collect()
        })
        .collect();
    Ok(Matrix::from_rows(&rows))
}

/// `(1/|C|)(1/k) sum_c sum_i min(r A, clip(r, 1-eps, 1+eps) A)` with per-position ratios.
pub fn policy_gradient_term(g: &mut Graph, logp: Var, group: &LossGroup, clip_eps: f64) -> Var {
    let k = group.k();
    let mut acc: Option<Var> = None;
    for c in &group.children {
        let entries: Vec<(usize, usize)> = c.tokens.iter().enumerate().map(|(i, &t)| (i, t)).collect();
        let lp = g.pick_entries(logp, &entries);
        let old = g.constant(Matrix::from_vec(k, 1, c.old_probs.iter().map(|p| p.ln()).collect()));
        let diff = g.sub(lp, old);
        let ratio = g.exp(diff);
        let unclipped = g.scale(ratio, c.advantage);
        let clipped = g.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
        let clipped = g.scale(clipped, c.advantage);
        let m = g.min(unclipped, clipped);
        let s = g.sum(m);
        acc = Some(match acc {
            None => s,
            Some(a) => g.add(a, s),
        });
    }
    let total = acc.expect("validated groups have children");
    let out = g.scale(total, 1.0 / (group.children.len() * k) as f64);
    g.label(out, "pg_term")
}

/// `(1/k) sum_i KL(pi_theta || pi_ref)` over the group's positions.
pub fn kl_term(g: &mut Graph, logp: Var, ref_logp: &Matrix) -> Var {
    let k = ref_logp.rows();
    let p = g.exp(logp);
    let r = g.constant(ref_logp.clone());
    let diff = g.sub(logp, r);
    let prod = g.mul(p, diff);
    let s = g.sum(prod);
    let out = g.scale(s, 1.0 / k as f64);
    g.label(out, "kl_term")
}

/// `weight * (1/k) sum_i KL(target || pi_theta)`.
pub fn target_kl_term(g: &mut Graph, logp: Var, target: &TargetDistribution, weight: f64) -> Var {
    let k = target.k();
    let t = g.constant(Matrix::from_rows(&target.probs));
    let cross = g.mul(t, logp);
    let cross = g.sum(cross);
    let kl = g.scale(cross, -1.0);
    let kl = g.add_scalar(kl, target.neg_entropy_sum());
    g.scale(kl, weight / k as f64)
}

/// The loss of one sibling group, recorded on a fresh graph ready for the backward pass.
pub struct GroupLoss {
    pub graph: Graph,
    pub loss: Var,
    pub breakdown: LossBreakdown,
}

/// Composes `-pg + beta_kl * KL(pi_theta || pi_ref) + aux`, where `aux` is the
/// self-distillation term (full), nothing (no_distill), or the diversity term (diversity).
pub fn total_loss<R: Policy + ?Sized>(
    model: &PolicyModel,
    model_ref: &R,
    group: &LossGroup,
    t: f64,
    cfg: &ObjectiveConfig,
    mode: LossMode,
) -> Result<GroupLoss> {
    let ref_logp = reference_log_probs(model_ref, group)?;
    let mut g = Graph::new();
    let logp = group_log_probs(model, &mut g, group)?;
    let pg = policy_gradient_term(&mut g, logp, group, cfg.clip_eps);
    let kl = kl_term(&mut g, logp, &ref_logp);
    let neg_pg = g.scale(pg, -1.0);
    let kl_weighted = g.scale(kl, cfg.beta_kl);
    let mut total = g.add(neg_pg, kl_weighted);

    let mut skipped = 0;
    let aux = match mode {
        LossMode::NoDistill => None,
        LossMode::Full | LossMode::Diversity => {
            let tau = tau_schedule(t, &cfg.schedule);
            let lambda = lambda_schedule(t, &cfg.schedule);
            let (weights, sign) = if mode == LossMode::Full {
                (positive_group_weights(group, tau), 1.0)
            } else {
                (negative_group_weights(group, tau), -1.0)
            };
            if weights.is_empty() {
                skipped = 1;
                None
            } else {
                let target = target_distribution(group, &weights, model.vocab_size());
                let term = target_kl_term(&mut g, logp, &target, sign * lambda);
                Some(g.label(term, if sign > 0.0 { "distill_term" } else { "diversity_term" }))
            }
        }
    };
    if let Some(a) = aux {
        total = g.add(total, a);
    }
    let total = g.label(total, "total_loss");

    let breakdown = LossBreakdown {
        pg_term: g.value(pg).value(),
        kl_term: g.value(kl).value(),
        distill_term: aux.map_or(0.0, |a| g.value(a).value()),
        total: g.value(total).value(),
        groups: 1,
        distill_skipped: skipped,
    };
    for (name, v) in [
        ("pg_term", breakdown.pg_term),
        ("kl_term", breakdown.kl_term),
        ("distill_term", breakdown.distill_term),
        ("total_loss", breakdown.total),
    ] {
        if !v.is_finite() {
            return Err(Error::numeric(name, format!("non-finite value {v}")));
        }
    }
    Ok(GroupLoss { graph: g, loss: total, breakdown })
}

/// Value of the clipped policy-gradient term alone.
pub fn policy_gradient_loss(group: &LossGroup, model: &PolicyModel, clip_eps: f64) -> Result<f64> {
    group.validate()?;
    let mut g = Graph::new();
    let logp = group_log_probs(model, &mut g, group)?;
    let pg = policy_gradient_term(&mut g, logp, group, clip_eps);
    Ok(g.value(pg).value())
}

/// `lambda (1/k) sum_i KL(P_target || pi_theta)`; 0 when no child has a positive advantage.
pub fn distillation_loss(group: &LossGroup, model: &PolicyModel, lambda: f64, tau: f64) -> Result<f64> {
    aux_loss(group, model, positive_group_weights(group, tau), lambda)
}

/// `-lambda (1/k) sum_i KL(P_div_target || pi_theta)`; 0 when no child has a negative advantage.
pub fn diversity_loss(group: &LossGroup, model: &PolicyModel, lambda: f64, tau: f64) -> Result<f64> {
    aux_loss(group, model, negative_group_weights(group, tau), -lambda)
}

fn aux_loss(group: &LossGroup, model: &PolicyModel, weights: Vec<(usize, f64)>, weight: f64) -> Result<f64> {
    group.validate()?;
    if weights.is_empty() {
        return Ok(0.0);
    }
    let target = target_distribution(group, &weights, model.vocab_size());
    let mut g = Graph::new();
    let logp = group_log_probs(model, &mut g, group)?;
    let term = target_kl_term(&mut g, logp, &target, weight);
    Ok(g.value(term).value())
}
