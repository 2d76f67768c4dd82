//! Offline pretraining and online fine-tuning for the algorithm matrix,
//! evaluation, run records and checkpoints, plus the toy landscape study.

mod checkpoint;
mod config;
mod record;
mod run;
pub mod toy;

pub use checkpoint::{load as load_checkpoint, read_config as read_checkpoint_config, save as save_checkpoint};
pub use config::{Algorithm, AlgorithmSpec, OnlineSampling, TrainConfig, CONFIG_KEYS};
pub use record::{LossWindow, Phase, RecordRow, RunRecord, RECORD_COLUMNS};
pub use run::{evaluate, evaluate_with, Agent, Counters, EvalResult, Trainer, UpdateStats};
