//! Horizontal flip with view swap, and per-channel colour gain.

use candle_core::{Device, Tensor};
use rand::Rng;

use super::StereoSample;
use crate::error::Result;
use crate::seed::{string_key, Seeds};
use crate::types::{DisparityMap, ImageTensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub flip: bool,
    /// Multiplicative gain per RGB channel, applied to both views.
    pub gains: [f32; 3],
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self {
            flip: false,
            gains: [1.0; 3],
        }
    }

    /// Draws parameters from a stream keyed by `(seed, id)`, so the result
    /// does not depend on the order in which samples are processed.
    pub fn draw(seed: u64, id: &str) -> Self {
        let mut rng = Seeds::new(seed).stream("augment", string_key(id));
        let flip = rng.random::<bool>();
        let gains = [
            rng.random_range(0.9..1.1),
            rng.random_range(0.9..1.1),
            rng.random_range(0.9..1.1),
        ];
        Self { flip, gains }
    }
}

fn flip_w(t: &Tensor) -> Result<Tensor> {
    let dim = t.rank() - 1;
    let w = t.dim(dim)?;
    let idx: Vec<u32> = (0..w as u32).rev().collect();
    Ok(t.index_select(&Tensor::new(idx, &Device::Cpu)?, dim)?)
}

fn flip_image(img: &ImageTensor) -> Result<ImageTensor> {
    ImageTensor::new(flip_w(img.tensor())?)
}

fn flip_disparity(d: &DisparityMap) -> Result<DisparityMap> {
    DisparityMap::new(flip_w(d.tensor())?, d.role())
}

fn flip_opt(d: &Option<DisparityMap>) -> Result<Option<DisparityMap>> {
    d.as_ref().map(flip_disparity).transpose()
}

/// Whether every left-view map has its right-view counterpart, which a
/// flip needs.
fn can_flip(s: &StereoSample) -> bool {
    s.right.is_some() && s.proxy.is_some() == s.proxy_right.is_some() && s.gt.is_some() == s.gt_right.is_some()
}

/// Mirrors the pair: the flipped right image becomes the new left image and
/// vice versa, and right-view disparities become left-view ones. Occlusion
/// and corruption metadata describe the old left view and are dropped.
fn flip(s: &StereoSample) -> Result<StereoSample> {
    let right = s.right.as_ref().expect("checked by can_flip");
    Ok(StereoSample {
        id: s.id.clone(),
        left: flip_image(right)?,
        right: Some(flip_image(&s.left)?),
        proxy: flip_opt(&s.proxy_right)?,
        proxy_right: flip_opt(&s.proxy)?,
        gt: flip_opt(&s.gt_right)?,
        gt_right: flip_opt(&s.gt)?,
        occlusion: None,
        corruption: None,
        rig: s.rig,
    })
}

fn apply_gains(img: &ImageTensor, gains: [f32; 3]) -> Result<ImageTensor> {
    let g = Tensor::new(&gains, &Device::Cpu)?.reshape((3, 1, 1))?;
    ImageTensor::new(img.tensor().broadcast_mul(&g)?.clamp(0f32, 1f32)?)
}

pub fn augment_with(sample: &StereoSample, params: &AugmentParams) -> Result<StereoSample> {
    let mut s = if params.flip && can_flip(sample) {
        flip(sample)?
    } else {
        sample.clone()
    };
    if params.gains != [1.0; 3] {
        s.left = apply_gains(&s.left, params.gains)?;
        s.right = s.right.as_ref().map(|r| apply_gains(r, params.gains)).transpose()?;
    }
    Ok(s)
}

pub fn augment(sample: &StereoSample, seed: u64) -> Result<StereoSample> {
    augment_with(sample, &AugmentParams::draw(seed, &sample.id))
}
