use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use candle_core::DType;
use rand::seq::SliceRandom;

use super::adam::Adam;
use super::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use super::loss::{total_loss, Batch, LossBreakdown, LossOptions, LossOutput};
use super::schedule::lr_at;
use crate::config::{DistillMode, ProxyMode, TrainConfig};
use crate::data::{augment, StereoSample};
use crate::error::{Error, Result};
use crate::networks::{file_proxy, MonoNet, NetConfig, ProxyTeacher, SampleProxy, SyntheticTeacher};
use crate::seed::{seed_everything, Seeds};

pub fn net_config(cfg: &TrainConfig) -> NetConfig {
    NetConfig {
        height: cfg.image_height,
        width: cfg.image_width,
        channel_base: cfg.channel_base,
        ts_enabled: cfg.ts_enabled(),
        mask_init_bias: cfg.mask_init_bias,
        ..NetConfig::desk(cfg.ts_enabled())
    }
}

/// The frozen teacher for a config. Its weights depend only on the seed and
/// the network geometry.
pub fn build_teacher(cfg: &TrainConfig) -> Result<Box<dyn ProxyTeacher>> {
    let seeds = seed_everything(cfg.seed);
    let teacher_seeds = Seeds::new(seeds.derive("teacher", 0));
    let synthetic = SyntheticTeacher::matching(&teacher_seeds, &net_config(cfg).student_shapes())?;
    Ok(match cfg.proxy_mode {
        ProxyMode::Synthetic => Box::new(SampleProxy { teacher: synthetic }),
        ProxyMode::File => {
            let root = cfg
                .proxy_root
                .clone()
                .ok_or_else(|| Error::config("proxy_root", "required when proxy_mode = \"file\""))?;
            Box::new(file_proxy(root, synthetic))
        }
    })
}

/// Network initialised from the run seed.
pub fn build_net(cfg: &TrainConfig, dtype: DType) -> Result<MonoNet> {
    let seeds = seed_everything(cfg.seed);
    MonoNet::new(net_config(cfg), Seeds::new(seeds.derive("init", 0)), dtype)
}

/// Per-epoch record written to the metrics CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub steps: usize,
    /// Sample-weighted means over the epoch.
    pub mean: LossBreakdown,
}

pub struct Trainer {
    cfg: TrainConfig,
    net: MonoNet,
    adam: Adam,
    teacher: Box<dyn ProxyTeacher>,
    teacher_hash: String,
    seeds: Seeds,
    epoch: usize,
    step: u64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let teacher = build_teacher(&cfg)?;
        let teacher_hash = teacher.parameter_hash()?;
        Ok(Self {
            net: build_net(&cfg, DType::F32)?,
            adam: Adam::new(cfg.adam_betas.0, cfg.adam_betas.1, cfg.adam_eps),
            teacher,
            teacher_hash,
            seeds: seed_everything(cfg.seed),
            epoch: 0,
            step: 0,
            cfg,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut t = Self::new(ckpt.config.clone())?;
        if t.teacher_hash != ckpt.teacher_hash {
            return Err(Error::InvalidValue("checkpoint was trained against a different teacher".into()));
        }
        t.net.params().load(&ckpt.params)?;
        t.adam.state = ckpt.adam.clone();
        t.epoch = ckpt.epoch;
        t.step = ckpt.step;
        Ok(t)
    }

    pub fn resume(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&load_checkpoint(path)?)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Changes the epoch budget, e.g. to continue a finished run.
    pub fn set_epochs(&mut self, epochs: usize) {
        self.cfg.epochs = epochs;
    }

    pub fn net(&self) -> &MonoNet {
        &self.net
    }

    pub fn teacher(&self) -> &dyn ProxyTeacher {
        self.teacher.as_ref()
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            epoch: self.epoch,
            step: self.step,
            params: self.net.params().snapshot(),
            adam: self.adam.state.clone(),
            teacher_hash: self.teacher_hash.clone(),
        }
    }

    /// Shuffled, proxy-filled and augmented batches of `epoch`. The result
    /// depends only on the seed, the epoch and the dataset.
    pub fn epoch_batches(&self, dataset: &[StereoSample], epoch: usize) -> Result<Vec<Vec<StereoSample>>> {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut self.seeds.stream("shuffle", epoch as u64));
        let aug_seed = self.seeds.derive("augment", epoch as u64);
        let prepared = order
            .into_iter()
            .map(|i| {
                let mut s = dataset[i].clone();
                if self.cfg.proxy_mode == ProxyMode::File {
                    s.proxy = Some(self.teacher.proxy_disparity(&s)?);
                    s.proxy_right = None;
                }
                if self.cfg.augment {
                    s = augment(&s, aug_seed)?;
                }
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(prepared.chunks(self.cfg.batch_size()).map(|c| c.to_vec()).collect())
    }

    /// Loss of a batch under the current weights, without updating them.
    pub fn loss(&self, samples: &[StereoSample], epoch: usize) -> Result<LossOutput> {
        let batch = Batch::from_samples(samples, self.cfg.image_height, self.cfg.image_width, self.net.dtype())?;
        let with_masks = self.cfg.distill_mode == DistillMode::Selective;
        let out = self.net.forward(&batch.left, with_masks)?;
        let teacher = if self.cfg.ts_enabled() {
            Some(self.teacher.teacher_features(&batch.left, &batch.right)?)
        } else {
            None
        };
        total_loss(&batch, &out, teacher.as_ref(), &LossOptions::from_config(&self.cfg, epoch))
    }

    /// One optimizer step on `samples` at the learning rate of the current
    /// epoch.
    pub fn train_step(&mut self, samples: &[StereoSample]) -> Result<LossBreakdown> {
        let lr = lr_at(self.epoch, &self.cfg)?;
        let loss = self.loss(samples, self.epoch)?;
        let grads = loss.total.backward()?;
        let norm = self.adam.step(self.net.params(), &grads, lr, Some(self.cfg.grad_clip))?;
        if !norm.is_finite() {
            return Err(Error::NanLoss {
                term: "gradient".into(),
            });
        }
        self.step += 1;
        log::debug!(
            "step={} epoch={} lr={lr:e} loss={:.6} grad_norm={norm:.4}",
            self.step,
            self.epoch,
            loss.breakdown.total
        );
        Ok(loss.breakdown)
    }

    fn check_teacher(&self) -> Result<()> {
        if self.teacher.parameter_hash()? != self.teacher_hash {
            return Err(Error::InvalidValue("teacher parameters changed during training".into()));
        }
        Ok(())
    }

    pub fn run_epoch(&mut self, dataset: &[StereoSample]) -> Result<EpochRecord> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let epoch = self.epoch;
        let lr = lr_at(epoch, &self.cfg)?;
        let mut mean = LossBreakdown::default();
        let mut steps = 0;
        for batch in self.epoch_batches(dataset, epoch)? {
            let b = self.train_step(&batch)?;
            mean.add_scaled(&b, batch.len() as f64 / dataset.len() as f64);
            steps += 1;
        }
        self.check_teacher()?;
        self.epoch += 1;
        let rec = EpochRecord { epoch, lr, steps, mean };
        log::info!(
            "epoch={epoch} lr={lr:e} L_total={:.6} L_depth={:.6} L_mask={:.6} L_TS={:.6}",
            mean.total,
            mean.depth,
            mean.mask,
            mean.ts
        );
        Ok(rec)
    }
}

pub const METRICS_HEADER: [&str; 9] = ["epoch", "lr", "L_total", "L_depth", "L_mask", "L_TS", "L_FD", "L_CD", "L_SD"];

fn metrics_row(r: &EpochRecord) -> Vec<String> {
    let m = &r.mean;
    let mut row = vec![r.epoch.to_string(), format!("{:e}", r.lr)];
    row.extend([m.total, m.depth, m.mask, m.ts, m.fd, m.cd, m.sd].iter().map(|v| format!("{v:.9e}")));
    row
}

/// Where [`train`] writes its outputs.
#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub metrics_csv: PathBuf,
    pub last_checkpoint: PathBuf,
    pub records: Vec<EpochRecord>,
}

/// Runs the remaining epochs of `trainer`, appending to `out_dir/metrics.csv`
/// and writing `epoch_NNN.safetensors` plus `last.safetensors` after every
/// epoch.
pub fn train_with(trainer: &mut Trainer, dataset: &[StereoSample], out_dir: &Path) -> Result<TrainOutputs> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let metrics_csv = out_dir.join("metrics.csv");
    let fresh = !metrics_csv.exists() || trainer.epoch() == 0;
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&metrics_csv)
        .map_err(|e| Error::io(&metrics_csv, e))?;
    let mut csv = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::Malformed {
        path: metrics_csv.clone(),
        msg: e.to_string(),
    };
    if fresh {
        csv.write_record(METRICS_HEADER).map_err(csv_err)?;
    }
    let last_checkpoint = out_dir.join("last.safetensors");
    let mut records = Vec::new();
    while trainer.epoch() < trainer.config().epochs {
        let rec = trainer.run_epoch(dataset)?;
        csv.write_record(metrics_row(&rec)).map_err(csv_err)?;
        csv.flush().map_err(|e| Error::io(&metrics_csv, e))?;
        let ckpt = trainer.checkpoint();
        save_checkpoint(&out_dir.join(format!("epoch_{:03}.safetensors", rec.epoch)), &ckpt)?;
        save_checkpoint(&last_checkpoint, &ckpt)?;
        records.push(rec);
    }
    Ok(TrainOutputs {
        metrics_csv,
        last_checkpoint,
        records,
    })
}

pub fn train(cfg: &TrainConfig, dataset: &[StereoSample], out_dir: &Path) -> Result<TrainOutputs> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut trainer = Trainer::new(cfg.clone())?;
    train_with(&mut trainer, dataset, out_dir)
}
