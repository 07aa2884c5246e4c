//! The monocular network: a VGG-shaped encoder, the teacher-student feature
//! module, and two U-Net style decoders (disparity and selection masks).

use candle_core::{DType, Tensor};

use super::layers::{leaky_relu, Conv2d};
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::seed::Seeds;
use crate::types::{FeaturePyramid, Origin};

/// Encoder levels; level `k` has `base * 2^k` channels at `1 / 2^k` resolution.
pub const ENCODER_LEVELS: usize = 5;
/// Decoder output scales, finest first.
pub const DECODER_SCALES: usize = 4;
/// Output heads start close to their bias so initial predictions are smooth.
const HEAD_WEIGHT_SCALE: f64 = 0.1;
/// Depth heads start at `sigmoid(-3)`, about 5% of the disparity range, and
/// grow from there.
const DEPTH_INIT_BIAS: f64 = -3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    pub height: usize,
    pub width: usize,
    pub channel_base: usize,
    pub ts_enabled: bool,
    /// Initial bias of the mask heads. Positive values start the masks on the
    /// proxy side.
    pub mask_init_bias: f64,
    /// Disparity upper bound as a fraction of the image width.
    pub max_disparity_ratio: f64,
}

impl NetConfig {
    pub fn desk(ts_enabled: bool) -> Self {
        Self {
            height: 64,
            width: 128,
            channel_base: 8,
            ts_enabled,
            mask_init_bias: 2.0,
            max_disparity_ratio: 0.3,
        }
    }

    pub fn channels(&self, level: usize) -> usize {
        self.channel_base << level
    }

    /// `(C, H, W)` of encoder level `k`.
    pub fn encoder_shape(&self, level: usize) -> (usize, usize, usize) {
        (self.channels(level), self.height >> level, self.width >> level)
    }

    /// Shapes of the distilled student levels (the 4 coarsest).
    pub fn student_shapes(&self) -> Vec<(usize, usize, usize)> {
        (1..ENCODER_LEVELS).map(|k| self.encoder_shape(k)).collect()
    }

    fn decoder_width(&self, level: usize) -> usize {
        (self.channels(level) / 2).max(self.channel_base)
    }
}

/// Everything one forward pass produces.
#[derive(Debug, Clone)]
pub struct MonoNetOutputs {
    /// Per scale `s = 0..4`: `(B, 1, H / 2^s, W / 2^s)`, pixels at that scale.
    pub disparities: Vec<Tensor>,
    /// Per scale: `(rc, sm)` logits, each `(B, 1, H / 2^s, W / 2^s)`.
    /// Empty when the mask decoder was skipped.
    pub mask_logits: Vec<(Tensor, Tensor)>,
    /// Student features for distillation (levels 1..5), when the T-S module
    /// is enabled.
    pub student_pyramid: Option<FeaturePyramid>,
    /// All encoder levels.
    pub encoder_pyramid: FeaturePyramid,
}

#[derive(Debug, Clone)]
struct EncoderLevel {
    conv0: Conv2d,
    conv1: Conv2d,
}

#[derive(Debug, Clone)]
struct TsLevel {
    spatial: Conv2d,
    down: Option<Conv2d>,
    mix: Conv2d,
}

#[derive(Debug, Clone)]
struct Decoder {
    top: Conv2d,
    /// Indexed by destination level `0..4`.
    fuse: Vec<Conv2d>,
    /// Indexed by scale `0..4`.
    heads: Vec<Conv2d>,
}

impl Decoder {
    fn new(store: &mut ParamStore, path: &str, cfg: &NetConfig, in_mult: usize, out_channels: usize, head_bias: f64) -> Result<Self> {
        let top_level = ENCODER_LEVELS - 1;
        let top = Conv2d::new(
            store,
            &format!("{path}.top"),
            cfg.channels(top_level) * in_mult,
            cfg.decoder_width(top_level),
            3,
            1,
        )?;
        let mut fuse = Vec::new();
        let mut heads = Vec::new();
        for level in 0..top_level {
            fuse.push(Conv2d::new(
                store,
                &format!("{path}.fuse{level}"),
                cfg.decoder_width(level + 1) + cfg.channels(level) * in_mult,
                cfg.decoder_width(level),
                3,
                1,
            )?);
            heads.push(Conv2d::head(
                store,
                &format!("{path}.head{level}"),
                cfg.decoder_width(level),
                out_channels,
                3,
                HEAD_WEIGHT_SCALE,
                head_bias,
            )?);
        }
        Ok(Self { top, fuse, heads })
    }

    /// Returns the raw head outputs, finest scale first.
    fn forward(&self, inputs: &[Tensor]) -> Result<Vec<Tensor>> {
        let top_level = inputs.len() - 1;
        let mut x = self.top.forward(&inputs[top_level])?.relu()?;
        let mut outs = vec![None; top_level];
        for level in (0..top_level).rev() {
            let (_, _, h, w) = inputs[level].dims4()?;
            x = x.upsample_nearest2d(h, w)?;
            x = Tensor::cat(&[&x, &inputs[level]], 1)?;
            x = self.fuse[level].forward(&x)?.relu()?;
            outs[level] = Some(self.heads[level].forward(&x)?);
        }
        Ok(outs.into_iter().map(|o| o.expect("every scale filled")).collect())
    }
}

/// Monocular network. Only the left image is ever consumed.
#[derive(Debug, Clone)]
pub struct MonoNet {
    cfg: NetConfig,
    params: ParamStore,
    encoder: Vec<EncoderLevel>,
    ts: Option<Vec<TsLevel>>,
    depth_decoder: Decoder,
    mask_decoder: Decoder,
}

impl MonoNet {
    pub fn new(cfg: NetConfig, seeds: Seeds, dtype: DType) -> Result<Self> {
        if cfg.height % 16 != 0 || cfg.width % 16 != 0 || cfg.height == 0 || cfg.width == 0 {
            return Err(Error::InvalidValue(format!(
                "input {}x{} is not divisible by 16",
                cfg.height, cfg.width
            )));
        }
        let mut store = ParamStore::new(seeds, dtype);
        let mut encoder = Vec::new();
        for k in 0..ENCODER_LEVELS {
            let c_in = if k == 0 { 3 } else { cfg.channels(k - 1) };
            let c = cfg.channels(k);
            encoder.push(EncoderLevel {
                conv0: Conv2d::new(&mut store, &format!("encoder.l{k}.conv0"), c_in, c, 3, 1)?,
                conv1: Conv2d::new(&mut store, &format!("encoder.l{k}.conv1"), c, c, 3, 1)?,
            });
        }
        let ts = if cfg.ts_enabled {
            let mut levels = Vec::new();
            for k in 0..ENCODER_LEVELS {
                let c = cfg.channels(k);
                levels.push(TsLevel {
                    spatial: Conv2d::new(&mut store, &format!("ts.l{k}.spatial"), c, c, 3, 1)?,
                    down: if k > 0 {
                        Some(Conv2d::new(&mut store, &format!("ts.l{k}.down"), cfg.channels(k - 1), c, 3, 2)?)
                    } else {
                        None
                    },
                    mix: Conv2d::new(&mut store, &format!("ts.l{k}.mix"), c, c, 1, 1)?,
                });
            }
            Some(levels)
        } else {
            None
        };
        let in_mult = if cfg.ts_enabled { 2 } else { 1 };
        let depth_decoder = Decoder::new(&mut store, "depth_decoder", &cfg, in_mult, 1, DEPTH_INIT_BIAS)?;
        let mask_decoder = Decoder::new(&mut store, "mask_decoder", &cfg, in_mult, 2, cfg.mask_init_bias)?;
        Ok(Self {
            cfg,
            params: store,
            encoder,
            ts,
            depth_decoder,
            mask_decoder,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    pub fn encode(&self, left: &Tensor) -> Result<FeaturePyramid> {
        let (_, c, h, w) = left.dims4()?;
        if c != 3 {
            return Err(Error::InvalidValue(format!("expected 3 input channels, got {c}")));
        }
        if h % 16 != 0 || w % 16 != 0 {
            return Err(Error::InvalidValue(format!(
                "input {h}x{w} is not divisible by 2^4"
            )));
        }
        let mut x = left.to_dtype(self.dtype())?;
        let mut levels = Vec::with_capacity(ENCODER_LEVELS);
        for (k, level) in self.encoder.iter().enumerate() {
            if k > 0 {
                x = x.max_pool2d(2)?;
            }
            x = level.conv0.forward(&x)?.relu()?;
            x = level.conv1.forward(&x)?.relu()?;
            levels.push(x.clone());
        }
        Ok(FeaturePyramid::new(levels, Origin::Student))
    }

    /// Student features for every encoder level.
    fn student_features(&self, ts: &[TsLevel], enc: &FeaturePyramid) -> Result<Vec<Tensor>> {
        let mut out: Vec<Tensor> = Vec::with_capacity(ENCODER_LEVELS);
        for (k, (level, f)) in ts.iter().zip(&enc.levels).enumerate() {
            let mut h = leaky_relu(&level.spatial.forward(f)?)?;
            if let (Some(down), Some(prev)) = (&level.down, k.checked_sub(1).map(|j| &out[j])) {
                h = h.add(&leaky_relu(&down.forward(prev)?)?)?;
            }
            out.push(leaky_relu(&level.mix.forward(&h.add(f)?)?)?);
        }
        Ok(out)
    }

    /// Runs the network on a `(B, 3, H, W)` batch of left images.
    pub fn forward(&self, left: &Tensor, with_masks: bool) -> Result<MonoNetOutputs> {
        let enc = self.encode(left)?;
        let (decoder_inputs, student) = match &self.ts {
            Some(ts) => {
                let s = self.student_features(ts, &enc)?;
                let inputs = enc
                    .levels
                    .iter()
                    .zip(&s)
                    .map(|(e, s)| Ok(Tensor::cat(&[e, s], 1)?))
                    .collect::<Result<Vec<_>>>()?;
                let pyramid = FeaturePyramid::new(s[1..].to_vec(), Origin::Student);
                (inputs, Some(pyramid))
            }
            None => (enc.levels.clone(), None),
        };
        let ratio = self.cfg.max_disparity_ratio;
        let disparities = self
            .depth_decoder
            .forward(&decoder_inputs)?
            .into_iter()
            .map(|raw| {
                let w = raw.dim(3)? as f64;
                Ok((candle_nn::ops::sigmoid(&raw)? * (ratio * w))?)
            })
            .collect::<Result<Vec<_>>>()?;
        let mask_logits = if with_masks {
            self.mask_decoder
                .forward(&decoder_inputs)?
                .into_iter()
                .map(|raw| Ok((raw.narrow(1, 0, 1)?, raw.narrow(1, 1, 1)?)))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(MonoNetOutputs {
            disparities,
            mask_logits,
            student_pyramid: student,
            encoder_pyramid: enc,
        })
    }
}
