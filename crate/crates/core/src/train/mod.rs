//! The outer training loop plus evaluation, bound verification, and ablation drivers.

mod ablate;
mod adam;
mod bounds;
mod config;
mod eval;
mod pretrain;
mod run;

pub use ablate::{ablate, slope, AblationConfig, AblationReport, ArmRun, ArmSummary, PhaseSummary, EARLY_FRACTION, FINAL_FRACTION};
pub use adam::Adam;
pub use bounds::{verify_bounds, BoundRecord, BoundsConfig, BoundsSummary};
pub use config::{TrainConfig, TrainMode};
pub use eval::{evaluate, EvalReport};
pub use pretrain::pretrain;
pub use run::{initial_model, read_metrics, train, train_with, tree_masked_entropy, MetricsRecord, PhaseTiming, TrainOutcome};

