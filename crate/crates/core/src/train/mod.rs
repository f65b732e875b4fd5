//! Curriculum training: the summed objective, AdamW with per-phase warmup
//! and cosine restarts, parameter EMA, and multi-seed sweeps.

mod config;
mod curriculum;
pub mod loss;
mod optim;
mod record;
mod summary;

pub use config::TrainConfig;
pub use curriculum::{
    analysis_batch, evaluate_mse, heldout_batch, run_curriculum, sweep, SweepEntry, ANALYSIS_SEED,
};
pub use loss::{Regularization, SystemLoss};
pub use optim::{adamw_step, ema_update, lr_schedule, AdamParams, AdamState};
pub use record::{ActivationDump, PhaseMetrics, PhaseRecord, RunRecord};
pub use summary::{PhaseSummary, SweepSummary};
