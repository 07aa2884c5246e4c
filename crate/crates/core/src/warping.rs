//! Horizontal image warping by disparity and disparity/depth conversion.

use candle_core::{DType, Tensor, D};

use crate::error::{Error, Result};
use crate::types::CameraRig;

/// Which view the disparity is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpDirection {
    /// Reference is the left view: sample the source at `x - d`.
    LeftRef,
    /// Reference is the right view: sample the source at `x + d`.
    RightRef,
}

/// A source image resampled into the reference view.
#[derive(Debug, Clone)]
pub struct WarpResult {
    /// `(B, C, H, W)`.
    pub image: Tensor,
    /// `(B, 1, H, W)`, 1 where the sampling coordinate fell inside `[0, W-1]`.
    pub validity: Tensor,
}

impl WarpResult {
    /// Treats an image as a perfect, fully valid reconstruction.
    pub fn identity(image: &Tensor) -> Result<Self> {
        let (b, _, h, w) = image.dims4()?;
        Ok(Self {
            image: image.clone(),
            validity: Tensor::ones((b, 1, h, w), image.dtype(), image.device())?,
        })
    }
}

/// Samples `source` (B, C, H, W) along x at `x ∓ disparity` (B, 1, H, W) with
/// bilinear interpolation. Out-of-range coordinates are clamped to the border
/// and flagged invalid. Differentiable with respect to both inputs.
pub fn inverse_warp(source: &Tensor, disparity: &Tensor, direction: WarpDirection) -> Result<WarpResult> {
    let (b, c, h, w) = source.dims4()?;
    let (db, dc, dh, dw) = disparity.dims4()?;
    if (db, dc, dh, dw) != (b, 1, h, w) {
        return Err(Error::shape("inverse_warp", source.dims(), disparity.dims()));
    }
    let host = disparity.detach().to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    if host.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "disparity".into(),
        });
    }
    let dtype = source.dtype();
    let dev = source.device();
    let disparity = disparity.to_dtype(dtype)?;
    let xs: Vec<f64> = (0..w).map(|x| x as f64).collect();
    let grid = Tensor::from_vec(xs, (1, 1, 1, w), dev)?.to_dtype(dtype)?;
    let coord = match direction {
        WarpDirection::LeftRef => grid.broadcast_sub(&disparity)?,
        WarpDirection::RightRef => grid.broadcast_add(&disparity)?,
    };
    let max_x = (w - 1) as f64;

    // Validity and the integer sample positions are computed on the host from
    // detached values; the fractional weight keeps the gradient path.
    let coord_host = coord.detach().to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    let mut valid = Vec::with_capacity(coord_host.len());
    let mut left_idx = Vec::with_capacity(coord_host.len());
    let mut right_idx = Vec::with_capacity(coord_host.len());
    let mut base = Vec::with_capacity(coord_host.len());
    let x0_max = w.saturating_sub(2) as f64;
    for &x in &coord_host {
        valid.push(if (0.0..=max_x).contains(&x) { 1.0 } else { 0.0 });
        let xc = x.clamp(0.0, max_x);
        let x0 = xc.floor().min(x0_max);
        let x1 = (x0 + 1.0).min(max_x);
        left_idx.push(x0 as u32);
        right_idx.push(x1 as u32);
        base.push(x0);
    }
    let shape = (b, 1, h, w);
    let validity = Tensor::from_vec(valid, shape, dev)?.to_dtype(dtype)?;
    let base = Tensor::from_vec(base, shape, dev)?.to_dtype(dtype)?;
    let frac = coord.clamp(0.0, max_x)?.sub(&base)?;
    let expand = |v: Vec<u32>| -> Result<Tensor> {
        Ok(Tensor::from_vec(v, shape, dev)?
            .broadcast_as((b, c, h, w))?
            .contiguous()?)
    };
    let i0 = expand(left_idx)?;
    let i1 = expand(right_idx)?;
    let s0 = source.contiguous()?.gather(&i0, D::Minus1)?;
    let s1 = source.contiguous()?.gather(&i1, D::Minus1)?;
    // s0 + frac * (s1 - s0)
    let image = s0.add(&s1.sub(&s0)?.broadcast_mul(&frac)?)?;
    Ok(WarpResult { image, validity })
}

/// Parameters for turning disparities into metric depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthConversion {
    /// Disparities at or below this map to `max_depth`.
    pub min_disparity: f64,
    /// Sentinel depth for degenerate disparities, in metres.
    pub max_depth: f64,
}

impl Default for DepthConversion {
    fn default() -> Self {
        Self {
            min_disparity: 1e-6,
            max_depth: 100.0,
        }
    }
}

/// `depth = focal * baseline / disparity`, elementwise.
pub fn disparity_to_depth(disparity: &[f64], rig: &CameraRig, conv: DepthConversion) -> Vec<f64> {
    let fb = rig.fb();
    disparity
        .iter()
        .map(|&d| {
            if d <= conv.min_disparity || !d.is_finite() {
                conv.max_depth
            } else {
                fb / d
            }
        })
        .collect()
}

/// Inverse of [`disparity_to_depth`] for positive depths.
pub fn depth_to_disparity(depth: &[f64], rig: &CameraRig) -> Vec<f64> {
    let fb = rig.fb();
    depth.iter().map(|&z| if z > 0.0 { fb / z } else { 0.0 }).collect()
}
