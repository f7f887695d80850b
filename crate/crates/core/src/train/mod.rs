//! Tversky-loss training with Adam, exact gradient accumulation,
//! checkpointing and volumetric prediction.

mod adam;
mod config;
pub mod data;
pub mod predict;
pub mod step;
pub mod trainer;

pub use adam::Adam;
pub use config::TrainConfig;
pub use data::{prepare_case, to_micro_batch, TrainData};
pub use predict::{predict, predict_case, predict_prepared, PredictionVolume};
pub use step::{compute_gradients, train_step, MicroBatch, StepGradients};
pub use trainer::{
    epoch_plan, overfit_one_batch, read_history, train, validate, HistoryRecord, TrainOutcome, TrainState, ABORT_DIR,
    BEST_CHECKPOINT, HISTORY_FILE, LAST_CHECKPOINT,
};
