use candle_core::{DType, Device, Tensor};

use crate::config::{DistillMode, TrainConfig};
use crate::data::StereoSample;
use crate::error::{Error, Result};
use crate::networks::MonoNetOutputs;
use crate::ops::{resize_bilinear, scalar, zero_scalar};
use crate::photometric::PhotometricConfig;
use crate::select::{depth_loss, direct_loss, mask_loss, StereoView};
use crate::ts::ts_loss;
use crate::types::{FeaturePyramid, LossWeights, MaskRole, SelectionMask};

/// A training batch at network resolution.
#[derive(Debug, Clone)]
pub struct Batch {
    pub ids: Vec<String>,
    /// `(B, 3, H, W)`.
    pub left: Tensor,
    pub right: Tensor,
    /// `(B, 1, H, W)`, pixels.
    pub proxy: Tensor,
    /// `(B, 1, H, W)`, 1 where the proxy is defined (non-zero).
    pub proxy_valid: Tensor,
}

fn resize_to(t: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let (_, _, h, w) = t.dims4()?;
    if (h, w) == (height, width) {
        Ok(t.clone())
    } else {
        resize_bilinear(t, height, width)
    }
}

impl Batch {
    /// Stacks samples, resizing them to `height x width` when needed
    /// (disparities are rescaled with the width). Every sample needs a right
    /// image and a proxy.
    pub fn from_samples(samples: &[StereoSample], height: usize, width: usize, dtype: DType) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut left = Vec::new();
        let mut right = Vec::new();
        let mut proxy = Vec::new();
        let mut valid = Vec::new();
        for s in samples {
            let r = s
                .right
                .as_ref()
                .ok_or_else(|| Error::InvalidValue(format!("sample {} has no right image", s.id)))?;
            let p = s
                .proxy
                .as_ref()
                .ok_or_else(|| Error::InvalidValue(format!("sample {} has no proxy disparity", s.id)))?;
            let p = p.tensor().unsqueeze(0)?.unsqueeze(0)?;
            let v = p.gt(0f64)?.to_dtype(DType::F32)?;
            let ratio = width as f64 / s.width() as f64;
            left.push(resize_to(&s.left.tensor().unsqueeze(0)?, height, width)?);
            right.push(resize_to(&r.tensor().unsqueeze(0)?, height, width)?);
            proxy.push((resize_to(&p, height, width)? * ratio)?);
            // a resized pixel is valid only if all its sources were
            valid.push(resize_to(&v, height, width)?.ge(0.999)?.to_dtype(DType::F32)?);
        }
        let cat = |v: Vec<Tensor>| -> Result<Tensor> { Ok(Tensor::cat(&v, 0)?.to_dtype(dtype)?) };
        Ok(Self {
            ids: samples.iter().map(|s| s.id.clone()).collect(),
            left: cat(left)?,
            right: cat(right)?,
            proxy: cat(proxy)?,
            proxy_valid: cat(valid)?,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn view(&self) -> StereoView<'_> {
        StereoView {
            left: &self.left,
            right: &self.right,
        }
    }
}

/// How the objective is composed.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOptions {
    pub mode: DistillMode,
    pub weights: LossWeights,
    pub photometric: PhotometricConfig,
    pub scales: usize,
    /// When false, the mask-gated terms of the depth loss are switched off
    /// (mask warm-up); the masks themselves still train.
    pub masks_active: bool,
}

impl LossOptions {
    pub fn from_config(cfg: &TrainConfig, epoch: usize) -> Self {
        Self {
            mode: cfg.distill_mode,
            weights: cfg.weights,
            photometric: PhotometricConfig {
                alpha: cfg.weights.alpha,
                patch: cfg.patch,
                ..PhotometricConfig::default()
            },
            scales: cfg.scales,
            masks_active: epoch >= cfg.mask_warmup_epochs,
        }
    }
}

/// Scalar value of every term, averaged over scales where applicable.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub depth: f64,
    pub mask: f64,
    pub ts: f64,
    pub fd: f64,
    pub cd: f64,
    pub sd: f64,
}

impl LossBreakdown {
    /// `depth + lambda_mask * mask + lambda_ts * ts`, recomputed from the
    /// parts.
    pub fn recombined(&self, w: &LossWeights) -> f64 {
        self.depth + w.lambda_mask * self.mask + w.lambda_ts * self.ts
    }

    pub fn add_scaled(&mut self, other: &LossBreakdown, k: f64) {
        self.total += k * other.total;
        self.depth += k * other.depth;
        self.mask += k * other.mask;
        self.ts += k * other.ts;
        self.fd += k * other.fd;
        self.cd += k * other.cd;
        self.sd += k * other.sd;
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub total: Tensor,
    pub breakdown: LossBreakdown,
}

fn checked(term: &str, t: &Tensor) -> Result<f64> {
    let v = scalar(t)?;
    if !v.is_finite() {
        return Err(Error::NanLoss { term: term.into() });
    }
    Ok(v)
}

/// Upsamples a per-scale disparity to `(height, width)` and rescales its
/// values to full-resolution pixels.
pub fn upsample_disparity(d: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let w = d.dim(3)?;
    if w == width {
        return Ok(d.clone());
    }
    Ok((resize_bilinear(d, height, width)? * (width as f64 / w as f64))?)
}

/// The full objective for one batch.
pub fn total_loss(
    batch: &Batch,
    out: &MonoNetOutputs,
    teacher: Option<&FeaturePyramid>,
    opts: &LossOptions,
) -> Result<LossOutput> {
    let (_, _, height, width) = batch.left.dims4()?;
    let dtype = out.disparities[0].dtype();
    let device = Device::Cpu;
    let view = batch.view();
    let scales = opts.scales.min(out.disparities.len());
    let mut depth_sum = zero_scalar(dtype, &device)?;
    let mut mask_sum = zero_scalar(dtype, &device)?;
    for s in 0..scales {
        let d = upsample_disparity(&out.disparities[s], height, width)?;
        let terms = match opts.mode {
            DistillMode::Direct => direct_loss(view, &batch.proxy_valid, &batch.proxy, &d, &opts.photometric)?,
            DistillMode::Selective => {
                let (l_rc, l_sm) = out.mask_logits.get(s).ok_or_else(|| {
                    Error::InvalidValue("selective distillation needs mask logits".into())
                })?;
                let l_rc = resize_to(l_rc, height, width)?;
                let l_sm = resize_to(l_sm, height, width)?;
                let gate = batch.proxy_valid.to_dtype(dtype)?;
                let m_rc = SelectionMask::from_logits(&l_rc, Some(&gate), MaskRole::Rc)?;
                let m_sm = SelectionMask::from_logits(&l_sm, Some(&gate), MaskRole::Sm)?;
                mask_sum = mask_sum.add(&mask_loss(view, &m_rc, &m_sm, &batch.proxy, &d, &opts.photometric)?)?;
                if opts.masks_active {
                    depth_loss(view, m_rc.hard(), m_sm.hard(), &batch.proxy, &d, &opts.photometric)?
                } else {
                    let zero = d.zeros_like()?;
                    depth_loss(view, &zero, &zero, &batch.proxy, &d, &opts.photometric)?
                }
            }
        };
        depth_sum = depth_sum.add(&terms.total()?)?;
    }
    let depth = (depth_sum / scales as f64)?;
    let mask = (mask_sum / scales as f64)?;
    let w = &opts.weights;
    let mut b = LossBreakdown {
        depth: checked("L_depth", &depth)?,
        mask: checked("L_mask", &mask)?,
        ..LossBreakdown::default()
    };
    let mut total = depth.add(&(&mask * w.lambda_mask)?)?;
    if let (Some(t), Some(student)) = (teacher, out.student_pyramid.as_ref()) {
        if w.ts_enabled() {
            let ts = ts_loss(t, student, w)?;
            b.fd = checked("L_FD", &ts.fd)?;
            b.cd = checked("L_CD", &ts.cd)?;
            b.sd = checked("L_SD", &ts.sd)?;
            b.ts = checked("L_TS", &ts.total)?;
            total = total.add(&(&ts.total * w.lambda_ts)?)?;
        }
    }
    b.total = checked("L_total", &total)?;
    Ok(LossOutput { total, breakdown: b })
}
