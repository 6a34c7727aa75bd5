//! Torch-free building blocks for pseudo-label refinement experiments.
//!
//! This crate holds everything that does not need a tensor backend: the
//! label-noise analytics (confusion matrices, asymmetry, uniform-noise
//! equivalence), the experiment configuration, and every on-disk format the
//! pipeline reads or writes. Keeping these here lets the decoders be fuzzed
//! without linking libtorch.

pub mod config;
pub mod error;
pub mod formats;
pub mod noise;

pub use config::{ExperimentConfig, GanObjective, LabelSource};
pub use error::{Error, Result};
pub use noise::{
    accuracy_from_noise, asymmetry, build_confusion_matrix, inject_uniform_noise,
    uniform_noise_equivalent, ConfusionMatrix, NoiseSpec,
};
