//! Next-action anticipation with stochastic latent goals.
//!
//! A recurrent encoder maps an observed feature sequence to a diagonal
//! Gaussian over a latent goal space, candidate next-action
//! representations are sampled stochastically, and the candidate whose
//! induced goal distribution diverges least from the feature-based goal
//! is selected. Training combines three KL regularizers with a
//! cross-entropy term. The crate also ships a synthetic goal-driven
//! sequence generator, an AdamW trainer, evaluation metrics, and the
//! ablation/reporting harness used by the CLI.

pub mod anticipator;
pub mod checks;
pub mod data;
pub mod error;
pub mod gaussians;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod rng;

pub use error::{Error, Result};
