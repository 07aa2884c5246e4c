//! Optimization: loss composition, Adam, learning-rate schedule,
//! checkpoints and the epoch loop.

pub mod adam;
pub mod checkpoint;
pub mod loss;
pub mod run;
pub mod schedule;

pub use adam::{Adam, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use loss::{total_loss, upsample_disparity, Batch, LossBreakdown, LossOptions, LossOutput};
pub use run::{build_net, build_teacher, net_config, train, train_with, EpochRecord, TrainOutputs, Trainer, METRICS_HEADER};
pub use schedule::lr_at;
