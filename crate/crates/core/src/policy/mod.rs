//! Masked-diffusion policy: model, decoding, and distribution statistics.

pub mod checkpoint;
pub mod decode;
pub mod grid;
pub mod model;
pub mod state;
pub mod stats;

pub use decode::{decode_from_grid, denoise_step, generate, DecodeSchedule};
pub use grid::DistributionGrid;
pub use model::{compute_gradients, Counting, GradientSet, ModelConfig, ParamSet, Policy, PolicyModel, Sharpened};
pub use state::{SequenceState, Slot};
pub use stats::{masked_entropy, positionwise_kl};

#[cfg(test)]
mod tests;
