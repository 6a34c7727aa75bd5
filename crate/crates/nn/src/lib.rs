//! Networks, objectives, training procedures and measurements for
//! pseudo-label refinement.
//!
//! The pipeline pretrains a classifier on a labeled source domain, uses it to
//! pseudo-label an unlabeled target domain, trains a conditional GAN on those
//! noisy labels, and then alternates classifier steps on generated samples
//! with cGAN steps on target samples relabeled by the live classifier.

pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod objectives;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
