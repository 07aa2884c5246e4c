//! Self-supervised loss primitives: a ZNCC + L1 image reconstruction loss and
//! an edge-aware disparity smoothness loss.

use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::ops::{masked_mean, reflect_pad_hw, safe_sqrt, scalar};
use crate::warping::WarpResult;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotometricConfig {
    /// Weight of the ZNCC term against the L1 term.
    pub alpha: f64,
    /// Odd patch side for ZNCC.
    pub patch: usize,
    /// Added to the ZNCC denominator.
    pub eps: f64,
}

impl Default for PhotometricConfig {
    fn default() -> Self {
        Self {
            alpha: 0.85,
            patch: 3,
            eps: 1e-6,
        }
    }
}

impl PhotometricConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch < 3 || self.patch % 2 == 0 {
            return Err(Error::InvalidValue("patch must be odd and >= 3".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidValue("alpha must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::shape(op, a.dims(), b.dims()));
    }
    Ok(())
}

fn patch_views(x: &Tensor, patch: usize) -> Result<Vec<Tensor>> {
    let (_, _, h, w) = x.dims4()?;
    let padded = reflect_pad_hw(x, patch / 2)?;
    let mut views = Vec::with_capacity(patch * patch);
    for dy in 0..patch {
        for dx in 0..patch {
            views.push(padded.narrow(2, dy, h)?.narrow(3, dx, w)?);
        }
    }
    Ok(views)
}

/// Per-pixel ZNCC over a `patch x patch` window, computed per channel and
/// averaged over channels. Inputs `(B, C, H, W)`, output `(B, 1, H, W)` in
/// `[-1, 1]`. Zero-variance windows give 0.
pub fn zncc_map(a: &Tensor, b: &Tensor, cfg: &PhotometricConfig) -> Result<Tensor> {
    same_shape("zncc_map", a, b)?;
    cfg.validate()?;
    let n = (cfg.patch * cfg.patch) as f64;
    let sa = Tensor::stack(&patch_views(a, cfg.patch)?, 0)?;
    let sb = Tensor::stack(&patch_views(b, cfg.patch)?, 0)?;
    let ca = sa.broadcast_sub(&(sa.sum(0)? / n)?)?;
    let cb = sb.broadcast_sub(&(sb.sum(0)? / n)?)?;
    let cross = ca.mul(&cb)?.sum(0)?;
    let var_a = ca.sqr()?.sum(0)?;
    let var_b = cb.sqr()?.sum(0)?;
    let denom = (safe_sqrt(&var_a)?.mul(&safe_sqrt(&var_b)?)? + cfg.eps)?;
    let z = cross.div(&denom)?;
    Ok(z.mean_keepdim(1)?)
}

/// Per-pixel reconstruction integrand
/// `alpha * (1 - ZNCC) / 2 + (1 - alpha) * mean_c |reference - recon|`,
/// shape `(B, 1, H, W)`.
pub fn reconstruction_map(reference: &Tensor, recon: &Tensor, cfg: &PhotometricConfig) -> Result<Tensor> {
    same_shape("reconstruction_map", reference, recon)?;
    let z = zncc_map(reference, recon, cfg)?;
    let structural = (z.affine(-0.5, 0.5)? * cfg.alpha)?;
    let l1 = (reference.sub(recon)?.abs()?.mean_keepdim(1)? * (1.0 - cfg.alpha))?;
    Ok(structural.add(&l1)?)
}

/// Mean of the reconstruction integrand over the pixels the warp marked valid.
pub fn reconstruction_loss(reference: &Tensor, recon: &WarpResult, cfg: &PhotometricConfig) -> Result<Tensor> {
    if scalar(&recon.validity.sum_all()?)? == 0.0 {
        return Err(Error::NoValidPixels);
    }
    let map = reconstruction_map(reference, &recon.image, cfg)?;
    masked_mean(&map, &recon.validity)
}

/// Mean reconstruction integrand over `region` (B, 1, H, W), 0 if empty.
pub fn reconstruction_loss_in(
    reference: &Tensor,
    recon: &Tensor,
    region: &Tensor,
    cfg: &PhotometricConfig,
) -> Result<Tensor> {
    let map = reconstruction_map(reference, recon, cfg)?;
    masked_mean(&map, region)
}

fn forward_diff_x(x: &Tensor) -> Result<Tensor> {
    let w = x.dim(3)?;
    let d = x.narrow(3, 1, w - 1)?.sub(&x.narrow(3, 0, w - 1)?)?;
    Ok(d.pad_with_zeros(3, 0, 1)?)
}

fn forward_diff_y(x: &Tensor) -> Result<Tensor> {
    let h = x.dim(2)?;
    let d = x.narrow(2, 1, h - 1)?.sub(&x.narrow(2, 0, h - 1)?)?;
    Ok(d.pad_with_zeros(2, 0, 1)?)
}

/// Per-pixel edge-aware smoothness
/// `|dx d| exp(-|dx I|) + |dy d| exp(-|dy I|)` with forward differences
/// (zero on the last column / row). `image` is `(B, C, H, W)`, `disparity`
/// is `(B, 1, H, W)`; `|d I|` is averaged over channels.
pub fn smoothness_map(image: &Tensor, disparity: &Tensor) -> Result<Tensor> {
    let (b, _, h, w) = image.dims4()?;
    let (db, dc, dh, dw) = disparity.dims4()?;
    if (db, dc, dh, dw) != (b, 1, h, w) {
        return Err(Error::shape("smoothness", image.dims(), disparity.dims()));
    }
    let image = image.to_dtype(disparity.dtype())?;
    let gx = forward_diff_x(&image)?.abs()?.mean_keepdim(1)?;
    let gy = forward_diff_y(&image)?.abs()?.mean_keepdim(1)?;
    let ddx = forward_diff_x(disparity)?.abs()?;
    let ddy = forward_diff_y(disparity)?.abs()?;
    let sx = ddx.mul(&gx.neg()?.exp()?)?;
    let sy = ddy.mul(&gy.neg()?.exp()?)?;
    Ok(sx.add(&sy)?)
}

pub fn smoothness_loss(image: &Tensor, disparity: &Tensor) -> Result<Tensor> {
    Ok(smoothness_map(image, disparity)?.mean_all()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::scalar;
    use candle_core::{DType, Device};
    use rand::{Rng, SeedableRng};

    fn random(shape: (usize, usize, usize, usize), seed: u64) -> Tensor {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = shape.0 * shape.1 * shape.2 * shape.3;
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
    }

    #[test]
    fn self_correlation_is_one() {
        let a = random((1, 3, 6, 9), 1);
        let z = zncc_map(&a, &a, &PhotometricConfig::default()).unwrap();
        for v in z.flatten_all().unwrap().to_vec1::<f64>().unwrap() {
            assert!((v - 1.0).abs() < 1e-5, "{v}");
        }
    }

    #[test]
    fn reflected_patch_is_anticorrelated() {
        // Reflecting every value about a constant negates each centred patch.
        let v: Vec<f64> = (0..5 * 7).map(|i| (i % 7) as f64 * 0.3 + (i / 7) as f64 * 0.1).collect();
        let a = Tensor::from_vec(v, (1, 1, 5, 7), &Device::Cpu).unwrap();
        let b = a.affine(-1.0, 1.0).unwrap();
        let z = zncc_map(&a, &b, &PhotometricConfig::default()).unwrap();
        for v in z.flatten_all().unwrap().to_vec1::<f64>().unwrap() {
            assert!((v + 1.0).abs() < 1e-5, "{v}");
        }
    }

    #[test]
    fn constant_patch_gives_zero() {
        let a = Tensor::full(0.3f64, (1, 3, 4, 4), &Device::Cpu).unwrap();
        let b = random((1, 3, 4, 4), 2);
        let z = zncc_map(&a, &b, &PhotometricConfig::default()).unwrap();
        for v in z.flatten_all().unwrap().to_vec1::<f64>().unwrap() {
            assert!(v.abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn identical_reconstruction_is_zero_loss() {
        let a = random((2, 3, 6, 8), 3);
        let r = WarpResult::identity(&a).unwrap();
        let l = scalar(&reconstruction_loss(&a, &r, &PhotometricConfig::default()).unwrap()).unwrap();
        assert!(l.abs() < 1e-5, "{l}");
    }

    #[test]
    fn alpha_zero_is_mean_absolute_difference() {
        let a = random((1, 3, 4, 5), 4);
        let b = random((1, 3, 4, 5), 5);
        let r = WarpResult::identity(&b).unwrap();
        let l = scalar(&reconstruction_loss(&a, &r, &PhotometricConfig::with_alpha(0.0)).unwrap()).unwrap();
        let mad = scalar(&a.sub(&b).unwrap().abs().unwrap().mean_all().unwrap()).unwrap();
        assert!((l - mad).abs() < 1e-12);
    }

    #[test]
    fn empty_valid_set_is_error() {
        let a = random((1, 3, 4, 5), 4);
        let r = WarpResult {
            image: a.clone(),
            validity: Tensor::zeros((1, 1, 4, 5), DType::F64, &Device::Cpu).unwrap(),
        };
        assert!(matches!(
            reconstruction_loss(&a, &r, &PhotometricConfig::default()),
            Err(Error::NoValidPixels)
        ));
    }

    #[test]
    fn smoothness_of_constant_disparity_is_zero() {
        let img = random((1, 3, 5, 6), 6);
        let d = Tensor::full(3.5f64, (1, 1, 5, 6), &Device::Cpu).unwrap();
        assert_eq!(scalar(&smoothness_loss(&img, &d).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn smoothness_ramp_on_flat_image() {
        let (h, w, s) = (4usize, 8usize, 0.7f64);
        let img = Tensor::full(0.5f64, (1, 3, h, w), &Device::Cpu).unwrap();
        let v: Vec<f64> = (0..h * w).map(|i| s * (i % w) as f64).collect();
        let d = Tensor::from_vec(v, (1, 1, h, w), &Device::Cpu).unwrap();
        let l = scalar(&smoothness_loss(&img, &d).unwrap()).unwrap();
        assert!((l - s * (w as f64 - 1.0) / w as f64).abs() < 1e-12);
    }

    #[test]
    fn image_edges_attenuate_smoothness() {
        let (h, w) = (4usize, 8usize);
        let step: Vec<f64> = (0..h * w).map(|i| if i % w >= 4 { 1.0 } else { 0.0 }).collect();
        let d = Tensor::from_vec(step.clone(), (1, 1, h, w), &Device::Cpu).unwrap();
        let edge_img = Tensor::from_vec(step, (1, 1, h, w), &Device::Cpu)
            .unwrap()
            .broadcast_as((1, 3, h, w))
            .unwrap()
            .contiguous()
            .unwrap();
        let flat = Tensor::zeros((1, 3, h, w), DType::F64, &Device::Cpu).unwrap();
        let with_edge = scalar(&smoothness_loss(&edge_img, &d).unwrap()).unwrap();
        let without = scalar(&smoothness_loss(&flat, &d).unwrap()).unwrap();
        assert!(with_edge < without);
    }

    #[test]
    fn smoothness_rejects_shape_mismatch() {
        let img = random((1, 3, 5, 6), 6);
        let d = Tensor::zeros((1, 1, 5, 5), DType::F64, &Device::Cpu).unwrap();
        assert!(smoothness_loss(&img, &d).is_err());
    }
}
