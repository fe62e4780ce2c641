//! Margin-matched preference optimization.
//!
//! Pairwise feedback carries more than a winner: judges and voters also report
//! how much better one response is. This crate turns that quality margin `m`
//! into a soft Bradley-Terry target `σ(γ·m)` and trains desk-scale reward
//! models and candidate-set policies against it, next to the usual hard-target
//! baselines (DPO, conservative DPO, pairwise reward modeling).
//!
//! Module map:
//! - [`feedback_data`]: JSONL ingestion, orientation, quartile sampling, filters, synthetic corpora.
//! - [`bt_target`]: margin → target probability, preference curves, similarity-based margins.
//! - [`losses`]: soft binary cross-entropy family and the weighted binary objective.
//! - [`scorers`]: tabular/linear rewards, tabular/log-linear policies, SGD/Adam.
//! - [`trainer`]: seeded minibatch loop with validation margin trajectories.
//! - [`eval`]: accuracy, ECE and reliability bins, best-of-n, category weighting.

pub mod bt_target;
pub mod eval;
pub mod feedback_data;
pub mod losses;
pub mod math;
pub mod presets;
pub mod scorers;
pub mod seeds;
pub mod trainer;

pub use bt_target::{target_probability, MarginSpec};
pub use eval::{EvalReport, ReliabilityBin};
pub use feedback_data::{BinaryLabel, DatasetSplit, FeedbackRecord, PreferencePair, ResponseRef};
pub use losses::{LossConfig, LossKind, LossOutput};
pub use scorers::{Checkpoint, Model, ScorerKind};
pub use trainer::{EpochMetrics, TrainConfig};
