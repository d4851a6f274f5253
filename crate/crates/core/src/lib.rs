//! Tree-structured policy optimization for small masked-diffusion language models.

pub mod autodiff;
pub mod error;
pub mod estimator;
pub mod objective;
pub mod policy;
pub mod tasks;
pub mod tensor;
pub mod train;
pub mod tree;
pub mod vocab;

pub use error::{Error, Result};
