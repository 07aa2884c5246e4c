use crate::config::TrainConfig;
use crate::error::{Error, Result};

/// Learning rate for `epoch`: the base rate halved once for every milestone
/// already reached.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::EpochOutOfRange {
            epoch,
            epochs: cfg.epochs,
        });
    }
    let halvings = cfg.lr_halve_epochs.iter().filter(|&&e| epoch >= e).count();
    Ok(cfg.lr * 0.5f64.powi(halvings as i32))
}
