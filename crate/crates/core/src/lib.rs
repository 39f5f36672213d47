//! Cross-domain model compression for time series classifiers.
//!
//! A large teacher network is pre-trained with domain-adversarial learning on
//! a labeled source domain plus an unlabeled target domain, then distilled
//! into a much smaller student. Distillation transfers two kinds of
//! knowledge:
//!
//! * feature-level knowledge, by training the student's features to fool a
//!   discriminator that separates teacher features from student features, and
//! * logit-level knowledge, by a temperature-softened KL term whose
//!   per-sample weights come from a second discriminator that separates
//!   source from target features — samples it cannot place confidently get
//!   the highest weight.
//!
//! The crate is organized along the pipeline: [`data`] (synthetic shift
//! generator, UCI HAR adapter, portable on-disk format, seeded batching),
//! [`nets`] (1D-CNN backbones, discriminators, manual backprop, complexity
//! accounting), [`losses`] (all objectives as pure functions with analytic
//! gradients), [`train`] (teacher pretraining and the two-step adversarial
//! distillation loop), and [`eval`] (macro-F1, feature export).
//!
//! Everything is deterministic given a seed: same config, same dataset bytes,
//! same results.

pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod nets;
pub mod numdiff;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
