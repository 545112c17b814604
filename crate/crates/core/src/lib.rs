//! Multilayer-perceptron training with shrinking sample schedules.
//!
//! Training normally visits every sample each epoch. With shrinking, the
//! samples with the smallest per-sample loss are dropped from the active set
//! after each epoch until it falls below a stop threshold; with recall the
//! full set is then restored. [`shrinkage`] holds the scheduling logic,
//! [`trainer`] the epoch loop, and [`verify`] the independent oracles used to
//! test both.
//!
//! The `parallel` feature (on by default) runs large matrix products,
//! dataset evaluation and the verification oracles on rayon. Every
//! reduction keeps a fixed order, so results are identical with the feature
//! off.

pub mod data;
pub mod error;
pub mod linalg;
pub mod model;
pub mod shrinkage;
pub mod trainer;
pub mod verify;

pub use data::{batches, load_csv, load_idx, synth_blobs, Batch, Dataset, TargetKind};
pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use model::{init_params, parse_arch, Activation, Loss, MlpParams, OutputUnit};
pub use shrinkage::{ActiveSet, RecallPolicy, Scheduler, Selection, ShrinkConfig, ShrinkMode};
pub use trainer::{improvement, speedup, train, EpochRecord, RunSummary, TrainConfig};
