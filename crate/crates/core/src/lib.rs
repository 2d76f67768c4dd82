//! Offline-to-online actor-critic laboratory.
//!
//! The crate trains twin-critic SAC agents whose critics are regularized by
//! one of four objectives (plain TD, CQL, Cal-QL, and a multi-term pairwise
//! ranking loss) on two small sparse-reward tasks: a 2-D action-space toy
//! regression problem and a continuous point-mass maze. Analysis helpers
//! inspect the learned Q landscape (gradient fields, gradient-ascent paths,
//! `dQ/da` statistics, ranking accuracies).
//!
//! Module map:
//!
//! - [`ndmath`]: dense matrices, MLPs with reverse-mode gradients, Adam,
//!   gradient clipping and the binary parameter checkpoint format.
//! - [`par`]: row-parallel kernels (rayon) with a sequential fallback.
//! - [`envs`]: the toy disc task, the point maze, scripted data collectors.
//! - [`datastore`]: transitions, trajectories, datasets, replay buffers and
//!   the mixing-ratio sampler.
//! - [`critics`]: twin critics and the TD / CQL / Cal-QL / ranking objectives.
//! - [`actor`]: squashed-Gaussian policy and entropy temperature.
//! - [`trainer`]: offline pretraining, online fine-tuning, evaluation, the
//!   toy landscape study and run records.
//! - [`analysis`]: Q-landscape diagnostics with CSV and SVG output.

pub mod actor;
pub mod analysis;
pub mod critics;
pub mod datastore;
pub mod envs;
mod error;
pub mod ndmath;
pub mod par;
pub mod rng;
pub mod trainer;

pub use error::{Error, ErrorCategory, Result};
