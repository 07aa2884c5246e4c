//! Small differentiable tensor helpers used by the loss modules.

use candle_core::{DType, Device, Tensor};

use crate::error::{Error, Result};

/// Smallest value fed to `sqrt` on the differentiable path.
const SQRT_FLOOR: f64 = 1e-30;

/// Reads a scalar tensor as `f64`.
pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.reshape(())?.to_scalar::<f64>()?)
}

pub fn zero_scalar(dtype: DType, device: &Device) -> Result<Tensor> {
    Ok(Tensor::zeros((), dtype, device)?)
}

/// `sqrt(x)` with value and gradient 0 where `x <= 0`.
pub fn safe_sqrt(x: &Tensor) -> Result<Tensor> {
    let positive = x.gt(0f64)?;
    let root = x.maximum(SQRT_FLOOR)?.sqrt()?;
    Ok(positive.where_cond(&root, &root.zeros_like()?)?)
}

/// Mean of `values` over the pixels where `mask` is 1. `mask` is treated as a
/// constant and broadcast against `values`. Returns 0 when the mask is empty.
pub fn masked_mean(values: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let mask = mask.detach().to_dtype(values.dtype())?;
    let mask = mask.broadcast_as(values.shape())?;
    let count = scalar(&mask.sum_all()?)?;
    if count == 0.0 {
        return zero_scalar(values.dtype(), values.device());
    }
    Ok((values.mul(&mask)?.sum_all()? / count)?)
}

fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

/// Reflect-pads the last two dims by `pad` on every side (no edge repeat,
/// i.e. `[2, 1 | 0, 1, 2, ... ]`).
pub fn reflect_pad_hw(x: &Tensor, pad: usize) -> Result<Tensor> {
    if pad == 0 {
        return Ok(x.clone());
    }
    let rank = x.rank();
    if rank < 2 {
        return Err(Error::InvalidValue("reflect_pad_hw needs rank >= 2".into()));
    }
    let (h, w) = (x.dims()[rank - 2], x.dims()[rank - 1]);
    let idx = |n: usize| -> Result<Tensor> {
        let v: Vec<u32> = (-(pad as isize)..(n + pad) as isize)
            .map(|i| reflect_index(i, n) as u32)
            .collect();
        Ok(Tensor::from_vec(v, n + 2 * pad, x.device())?)
    };
    let x = x.index_select(&idx(h)?, rank - 2)?;
    Ok(x.index_select(&idx(w)?, rank - 1)?)
}

/// Row-stochastic matrix mapping `n_in` samples to `n_out` with half-pixel
/// centred linear interpolation and edge clamping.
pub fn linear_resize_matrix(n_in: usize, n_out: usize) -> Vec<f64> {
    let mut m = vec![0.0; n_out * n_in];
    let scale = n_in as f64 / n_out as f64;
    for o in 0..n_out {
        let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        let t = src - i0 as f64;
        m[o * n_in + i0] += 1.0 - t;
        m[o * n_in + i1] += t;
    }
    m
}

/// Bilinear resize of the last two dims of a `(B, C, H, W)` tensor.
/// Differentiable: implemented as two matrix products.
pub fn resize_bilinear(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    if (h, w) == (out_h, out_w) {
        return Ok(x.clone());
    }
    let dev = x.device();
    let aw = Tensor::from_vec(linear_resize_matrix(w, out_w), (out_w, w), dev)?
        .to_dtype(x.dtype())?
        .t()?;
    let ah = Tensor::from_vec(linear_resize_matrix(h, out_h), (out_h, h), dev)?
        .to_dtype(x.dtype())?;
    let y = x.broadcast_matmul(&aw)?;
    Ok(ah.broadcast_matmul(&y)?)
}
