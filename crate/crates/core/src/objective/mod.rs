//! Losses and schedules for tree-structured policy optimization.
//!
//! Every loss acts on one sibling group: a parent state, the `k` positions its children
//! reveal, and each child's tokens, cached old-policy probabilities and advantage.

mod group;
mod loss;
mod schedule;
mod weights;

pub use group::{ChildSample, LossGroup};
pub use loss::{
    distillation_loss, diversity_loss, group_log_probs, kl_term, policy_gradient_loss, policy_gradient_term,
    reference_log_probs, target_kl_term, total_loss, GroupLoss, LossBreakdown, LossMode, ObjectiveConfig,
};
pub use schedule::{lambda_schedule, tau_schedule, ScheduleConfig};
pub use weights::{negative_group_weights, positive_group_weights, target_distribution, TargetDistribution};
