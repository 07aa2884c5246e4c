//! Checkpoints: one safetensors file holding the parameters, the optimizer
//! moments and, as string metadata, the config, epoch and step counters.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{Device, Tensor};

use super::adam::AdamState;
use crate::config::TrainConfig;
use crate::error::{Error, Result};

const FORMAT: &str = "depth-distill/1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: u64,
    pub params: BTreeMap<String, Tensor>,
    pub adam: AdamState,
    pub teacher_hash: String,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tensors: Vec<(String, &Tensor)> = Vec::new();
    for (k, t) in &ckpt.params {
        tensors.push((format!("param/{k}"), t));
    }
    for (k, t) in &ckpt.adam.m {
        tensors.push((format!("adam_m/{k}"), t));
    }
    for (k, t) in &ckpt.adam.v {
        tensors.push((format!("adam_v/{k}"), t));
    }
    let meta = HashMap::from([
        ("format".to_string(), FORMAT.to_string()),
        ("config".to_string(), ckpt.config.to_toml()),
        ("epoch".to_string(), ckpt.epoch.to_string()),
        ("step".to_string(), ckpt.step.to_string()),
        ("adam_t".to_string(), ckpt.adam.t.to_string()),
        ("teacher_hash".to_string(), ckpt.teacher_hash.clone()),
    ]);
    safetensors::serialize_to_file(tensors, Some(meta), path).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let malformed = |msg: String| Error::Malformed {
        path: path.to_path_buf(),
        msg,
    };
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (_, header) = safetensors::SafeTensors::read_metadata(&buf).map_err(|e| malformed(e.to_string()))?;
    let meta = header.metadata().clone().unwrap_or_default();
    let get = |k: &str| meta.get(k).cloned().ok_or_else(|| malformed(format!("metadata lacks `{k}`")));
    if get("format")? != FORMAT {
        return Err(malformed("unknown checkpoint format".into()));
    }
    let config = TrainConfig::parse(&get("config")?)?;
    let num = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| malformed(format!("bad `{k}`"))) };
    let tensors = candle_core::safetensors::load_buffer(&buf, &Device::Cpu).map_err(|e| malformed(e.to_string()))?;
    let mut params = BTreeMap::new();
    let mut adam = AdamState {
        t: num("adam_t")?,
        ..AdamState::default()
    };
    for (k, t) in tensors {
        if let Some(p) = k.strip_prefix("param/") {
            params.insert(p.to_string(), t);
        } else if let Some(p) = k.strip_prefix("adam_m/") {
            adam.m.insert(p.to_string(), t);
        } else if let Some(p) = k.strip_prefix("adam_v/") {
            adam.v.insert(p.to_string(), t);
        } else {
            return Err(malformed(format!("unexpected tensor `{k}`")));
        }
    }
    Ok(Checkpoint {
        config,
        epoch: num("epoch")? as usize,
        step: num("step")?,
        params,
        adam,
        teacher_hash: get("teacher_hash")?,
    })
}
