//! Training configuration and its flat `key = value` file format.
//!
//! Every key is optional; omitted keys take the published defaults. The file
//! is parsed as a flat TOML table so experiment configs stay diff-able.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::LossWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistillMode {
    /// Plain L1 to the proxy everywhere, no masks.
    Direct,
    /// Mask-gated proxy supervision.
    Selective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyMode {
    /// Proxy maps come with the samples (generated or stored in `proxy/`).
    Synthetic,
    /// Proxy maps are read from a separate directory of 16-bit PNGs.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub lr: f64,
    pub lr_halve_epochs: Vec<usize>,
    pub epochs: usize,
    /// `None` means "8 with the T-S module, 12 without".
    pub batch_size: Option<usize>,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub distill_mode: DistillMode,
    pub scales: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub channel_base: usize,
    pub seed: u64,
    pub dataset_root: PathBuf,
    pub proxy_mode: ProxyMode,
    pub proxy_root: Option<PathBuf>,
    pub grad_clip: f64,
    pub mask_warmup_epochs: usize,
    pub mask_init_bias: f64,
    pub augment: bool,
    pub patch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            lr: 1e-4,
            lr_halve_epochs: vec![20, 35, 45],
            epochs: 50,
            batch_size: None,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            distill_mode: DistillMode::Selective,
            scales: 4,
            image_height: 256,
            image_width: 512,
            channel_base: 32,
            seed: 0,
            dataset_root: PathBuf::from("data"),
            proxy_mode: ProxyMode::Synthetic,
            proxy_root: None,
            grad_clip: 10.0,
            mask_warmup_epochs: 0,
            mask_init_bias: 2.0,
            augment: true,
            patch: 3,
        }
    }
}

/// On-disk representation. Kept flat; `TrainConfig` groups the loss weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    alpha: f64,
    lambda_mask: f64,
    lambda_ts: f64,
    lambda_cd: f64,
    lambda_sd: f64,
    lr: f64,
    epochs: usize,
    lr_halve_epochs: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    adam_beta1: f64,
    adam_beta2: f64,
    adam_eps: f64,
    distill_mode: DistillMode,
    scales: usize,
    image_height: usize,
    image_width: usize,
    channel_base: usize,
    seed: u64,
    dataset_root: PathBuf,
    proxy_mode: ProxyMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    proxy_root: Option<PathBuf>,
    grad_clip: f64,
    mask_warmup_epochs: usize,
    mask_init_bias: f64,
    augment: bool,
    patch: usize,
}

impl Default for ConfigFile {
    fn default() -> Self {
        TrainConfig::default().into()
    }
}

impl From<TrainConfig> for ConfigFile {
    fn from(c: TrainConfig) -> Self {
        Self {
            alpha: c.weights.alpha,
            lambda_mask: c.weights.lambda_mask,
            lambda_ts: c.weights.lambda_ts,
            lambda_cd: c.weights.lambda_cd,
            lambda_sd: c.weights.lambda_sd,
            lr: c.lr,
            epochs: c.epochs,
            lr_halve_epochs: c.lr_halve_epochs,
            batch_size: c.batch_size,
            adam_beta1: c.adam_betas.0,
            adam_beta2: c.adam_betas.1,
            adam_eps: c.adam_eps,
            distill_mode: c.distill_mode,
            scales: c.scales,
            image_height: c.image_height,
            image_width: c.image_width,
            channel_base: c.channel_base,
            seed: c.seed,
            dataset_root: c.dataset_root,
            proxy_mode: c.proxy_mode,
            proxy_root: c.proxy_root,
            grad_clip: c.grad_clip,
            mask_warmup_epochs: c.mask_warmup_epochs,
            mask_init_bias: c.mask_init_bias,
            augment: c.augment,
            patch: c.patch,
        }
    }
}

impl From<ConfigFile> for TrainConfig {
    fn from(f: ConfigFile) -> Self {
        Self {
            weights: LossWeights {
                alpha: f.alpha,
                lambda_mask: f.lambda_mask,
                lambda_ts: f.lambda_ts,
                lambda_cd: f.lambda_cd,
                lambda_sd: f.lambda_sd,
            },
            lr: f.lr,
            lr_halve_epochs: f.lr_halve_epochs,
            epochs: f.epochs,
            batch_size: f.batch_size,
            adam_betas: (f.adam_beta1, f.adam_beta2),
            adam_eps: f.adam_eps,
            distill_mode: f.distill_mode,
            scales: f.scales,
            image_height: f.image_height,
            image_width: f.image_width,
            channel_base: f.channel_base,
            seed: f.seed,
            dataset_root: f.dataset_root,
            proxy_mode: f.proxy_mode,
            proxy_root: f.proxy_root,
            grad_clip: f.grad_clip,
            mask_warmup_epochs: f.mask_warmup_epochs,
            mask_init_bias: f.mask_init_bias,
            augment: f.augment,
            patch: f.patch,
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "alpha",
    "lambda_mask",
    "lambda_ts",
    "lambda_cd",
    "lambda_sd",
    "lr",
    "epochs",
    "lr_halve_epochs",
    "batch_size",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "distill_mode",
    "scales",
    "image_height",
    "image_width",
    "channel_base",
    "seed",
    "dataset_root",
    "proxy_mode",
    "proxy_root",
    "grad_clip",
    "mask_warmup_epochs",
    "mask_init_bias",
    "augment",
    "patch",
];

impl TrainConfig {
    /// Small geometry used for quick experiments: 64x128 input, channel base 8.
    pub fn desk() -> Self {
        Self {
            image_height: 64,
            image_width: 128,
            channel_base: 8,
            ..Self::default()
        }
    }

    pub fn ts_enabled(&self) -> bool {
        self.weights.ts_enabled()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
            .unwrap_or(if self.ts_enabled() { 8 } else { 12 })
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be > 0"));
        }
        if self.epochs < 1 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.adam_betas.0) {
            return Err(Error::config("adam_beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.adam_betas.1) {
            return Err(Error::config("adam_beta2", "must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::config("adam_eps", "must be > 0"));
        }
        if self.scales == 0 || self.scales > 4 {
            return Err(Error::config("scales", "must lie in 1..=4"));
        }
        if self.image_height == 0 || self.image_height % 16 != 0 {
            return Err(Error::config("image_height", "must be a positive multiple of 16"));
        }
        if self.image_width == 0 || self.image_width % 16 != 0 {
            return Err(Error::config("image_width", "must be a positive multiple of 16"));
        }
        if self.channel_base == 0 {
            return Err(Error::config("channel_base", "must be >= 1"));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::config("grad_clip", "must be > 0"));
        }
        if self.patch < 3 || self.patch % 2 == 0 {
            return Err(Error::config("patch", "must be odd and >= 3"));
        }
        if !self.mask_init_bias.is_finite() {
            return Err(Error::config("mask_init_bias", "must be finite"));
        }
        if self.proxy_mode == ProxyMode::File && self.proxy_root.is_none() {
            return Err(Error::config("proxy_root", "required when proxy_mode = \"file\""));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: BTreeMap<String, toml::Value> =
            toml::from_str(text).map_err(|e| Error::config("<file>", e.message().to_string()))?;
        if let Some(k) = table.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(Error::config(k.clone(), "unknown key"));
        }
        // Deserialize key by key so type errors name the key.
        for (k, v) in &table {
            let mut single = toml::Table::new();
            single.insert(k.clone(), v.clone());
            toml::Value::Table(single)
                .try_into::<ConfigFile>()
                .map_err(|e| Error::config(k.clone(), e.message().to_string()))?;
        }
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| Error::config("<file>", e.message().to_string()))?;
        let cfg: TrainConfig = file.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&ConfigFile::from(self.clone())).expect("flat config always serializes")
    }
}

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    TrainConfig::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = TrainConfig::parse("").unwrap();
        assert_eq!(c.weights.alpha, 0.85);
        assert_eq!(c.weights.lambda_sd, 1e5);
        assert_eq!(c.weights.lambda_cd, 1.0);
        assert_eq!(c.weights.lambda_mask, 1.0);
        assert_eq!(c.weights.lambda_ts, 1e-4);
        assert_eq!(c.lr, 1e-4);
        assert_eq!(c.lr_halve_epochs, vec![20, 35, 45]);
        assert_eq!(c.epochs, 50);
        assert_eq!(c.adam_betas, (0.9, 0.999));
        assert_eq!(c.adam_eps, 1e-8);
        assert_eq!((c.image_height, c.image_width), (256, 512));
        assert!(c.ts_enabled());
        assert_eq!(c.batch_size(), 8);
    }

    #[test]
    fn zero_lambda_ts_disables_module() {
        let c = TrainConfig::parse("lambda_ts = 0.0").unwrap();
        assert!(!c.ts_enabled());
        assert_eq!(c.batch_size(), 12);
    }

    #[test]
    fn range_error_names_key() {
        let e = TrainConfig::parse("alpha = 1.5").unwrap_err();
        match e {
            Error::Config { key, .. } => assert_eq!(key, "alpha"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let e = TrainConfig::parse("alpah = 0.5").unwrap_err();
        assert!(matches!(e, Error::Config { ref key, .. } if key == "alpah"));
    }

    #[test]
    fn type_error_names_key() {
        let e = TrainConfig::parse("epochs = \"many\"").unwrap_err();
        assert!(matches!(e, Error::Config { ref key, .. } if key == "epochs"));
    }

    #[test]
    fn missing_file() {
        let e = load_config(Path::new("/definitely/not/here.toml")).unwrap_err();
        assert!(matches!(e, Error::MissingFile(_)));
    }

    #[test]
    fn integer_literal_for_float_key() {
        let c = TrainConfig::parse("lambda_ts = 0\nalpha = 1").unwrap();
        assert!(!c.ts_enabled());
        assert_eq!(c.weights.alpha, 1.0);
    }

    #[test]
    fn round_trip() {
        let mut c = TrainConfig::desk();
        c.distill_mode = DistillMode::Direct;
        c.batch_size = Some(3);
        c.seed = 42;
        let back = TrainConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }
}
