//! Selective proxy distillation.
//!
//! Two binary masks choose, per pixel, between the frozen proxy disparity and
//! the current monocular estimate. The resulting virtual disparities are
//! scored photometrically to train the masks, and the masks then gate how the
//! proxy supervises the depth decoder.
//!
//! Gradient routing:
//! * the mask loss sees `d_mon` detached, so it only moves mask logits;
//! * the depth loss sees the masks as constants, so it only moves `d_mon`;
//! * hard masks are trained through the soft convex combination
//!   (straight-through): the forward value is the hard selection, the
//!   backward pass uses the gradient of `sigmoid(l) * d_ster + (1 - sigmoid(l)) * d_mon`.

use candle_core::{DType, Tensor};

use crate::error::{Error, Result};
use crate::ops::masked_mean;
use crate::photometric::{
    reconstruction_loss, reconstruction_loss_in, reconstruction_map, smoothness_loss, smoothness_map,
    PhotometricConfig,
};
use crate::types::{MaskRole, SelectionMask};
use crate::warping::{inverse_warp, WarpDirection};

/// A disparity field composed from proxy and monocular disparities.
#[derive(Debug, Clone)]
pub struct VirtualDisparity {
    /// Hard selection, detached. Each entry equals `d_ster` or `d_mon` exactly.
    pub map: Tensor,
    /// Soft relaxation, carries gradient.
    pub soft_map: Tensor,
    /// Value of `map`, gradient of `soft_map`.
    pub straight_through: Tensor,
    pub mask_role: MaskRole,
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::shape(op, a.dims(), b.dims()));
    }
    Ok(())
}

/// `map = hard * d_ster + (1 - hard) * d_mon` with straight-through gradients.
pub fn form_virtual_disparity(mask: &SelectionMask, d_ster: &Tensor, d_mon: &Tensor) -> Result<VirtualDisparity> {
    check_same("form_virtual_disparity", d_ster, d_mon)?;
    check_same("form_virtual_disparity", mask.logits(), d_mon)?;
    let d_ster = d_ster.detach().to_dtype(d_mon.dtype())?;
    let hard = mask.hard().ne(0f64)?;
    let map = hard.where_cond(&d_ster, &d_mon.detach())?;
    let p = mask.prob()?.to_dtype(d_mon.dtype())?;
    // p * d_ster + (1 - p) * d_mon = d_mon + p * (d_ster - d_mon)
    let soft_map = d_mon.add(&p.mul(&d_ster.sub(d_mon)?)?)?;
    // soft - soft is exactly zero, so the forward value is `map` bit for bit.
    let straight_through = map.add(&soft_map.sub(&soft_map.detach())?)?;
    Ok(VirtualDisparity {
        map,
        soft_map,
        straight_through,
        mask_role: mask.role(),
    })
}

/// Photometric inputs of one training view.
#[derive(Debug, Clone, Copy)]
pub struct StereoView<'a> {
    /// Reference (left) image `(B, 3, H, W)`.
    pub left: &'a Tensor,
    /// Source (right) image `(B, 3, H, W)`.
    pub right: &'a Tensor,
}

/// `L_rc(I^l, I^r(d_rc)) + L_sm(I^l, d_sm)`; the gradient only reaches the
/// mask logits.
pub fn mask_loss(
    view: StereoView<'_>,
    rc: &SelectionMask,
    sm: &SelectionMask,
    d_ster: &Tensor,
    d_mon: &Tensor,
    cfg: &PhotometricConfig,
) -> Result<Tensor> {
    let d_mon = d_mon.detach();
    let v_rc = form_virtual_disparity(rc, d_ster, &d_mon)?;
    let v_sm = form_virtual_disparity(sm, d_ster, &d_mon)?;
    let dtype = d_mon.dtype();
    let left = view.left.to_dtype(dtype)?;
    let right = view.right.to_dtype(dtype)?;
    let warped = inverse_warp(&right, &v_rc.straight_through, WarpDirection::LeftRef)?;
    let l_rc = reconstruction_loss(&left, &warped, cfg)?;
    let l_sm = smoothness_loss(&left, &v_sm.straight_through)?;
    Ok(l_rc.add(&l_sm)?)
}

/// The five terms of the mask-gated depth loss.
#[derive(Debug, Clone)]
pub struct DepthLossTerms {
    pub self_rc: Tensor,
    pub masked_rc: Tensor,
    pub self_sm: Tensor,
    pub masked_sm: Tensor,
    pub masked_l1: Tensor,
}

impl DepthLossTerms {
    pub fn total(&self) -> Result<Tensor> {
        Ok(self
            .self_rc
            .add(&self.masked_rc)?
            .add(&self.self_sm)?
            .add(&self.masked_sm)?
            .add(&self.masked_l1)?)
    }

    /// The purely self-supervised part, `L_rc + L_sm` of `d_mon`.
    pub fn self_supervised(&self) -> Result<Tensor> {
        Ok(self.self_rc.add(&self.self_sm)?)
    }
}

/// Mask-gated depth loss. `m_rc`, `m_sm` are hard `{0,1}` maps `(B, 1, H, W)`
/// and are treated as constants. Each masked term is averaged over its own
/// masked pixel count and is 0 when that region is empty.
pub fn depth_loss(
    view: StereoView<'_>,
    m_rc: &Tensor,
    m_sm: &Tensor,
    d_ster: &Tensor,
    d_mon: &Tensor,
    cfg: &PhotometricConfig,
) -> Result<DepthLossTerms> {
    check_same("depth_loss", d_ster, d_mon)?;
    check_same("depth_loss", m_rc, d_mon)?;
    check_same("depth_loss", m_sm, d_mon)?;
    let dtype = d_mon.dtype();
    let m_rc = m_rc.detach().to_dtype(dtype)?;
    let m_sm = m_sm.detach().to_dtype(dtype)?;
    let d_ster = d_ster.detach().to_dtype(dtype)?;
    let left = view.left.to_dtype(dtype)?;
    let right = view.right.to_dtype(dtype)?;

    let w_mon = inverse_warp(&right, d_mon, WarpDirection::LeftRef)?;
    let w_ster = inverse_warp(&right, &d_ster, WarpDirection::LeftRef)?;
    let ster_image = w_ster.image.detach();

    let self_rc = reconstruction_loss(&left, &w_mon, cfg)?;
    let rc_region = m_rc.mul(&w_ster.validity)?.mul(&w_mon.validity)?;
    let masked_rc = reconstruction_loss_in(&ster_image, &w_mon.image, &rc_region, cfg)?;
    let self_sm = smoothness_loss(&left, d_mon)?;
    let masked_sm = masked_mean(&smoothness_map(&ster_image, d_mon)?, &m_sm)?;
    let agree = m_rc.mul(&m_sm)?;
    let masked_l1 = masked_mean(&d_ster.sub(d_mon)?.abs()?, &agree)?;
    Ok(DepthLossTerms {
        self_rc,
        masked_rc,
        self_sm,
        masked_sm,
        masked_l1,
    })
}

/// Proxy-distillation baseline without masks:
/// `L_rc + L_sm + mean |d_ster - d_mon|` over pixels where the proxy is valid.
pub fn direct_loss(
    view: StereoView<'_>,
    proxy_valid: &Tensor,
    d_ster: &Tensor,
    d_mon: &Tensor,
    cfg: &PhotometricConfig,
) -> Result<DepthLossTerms> {
    check_same("direct_loss", d_ster, d_mon)?;
    let dtype = d_mon.dtype();
    let d_ster = d_ster.detach().to_dtype(dtype)?;
    let left = view.left.to_dtype(dtype)?;
    let right = view.right.to_dtype(dtype)?;
    let w_mon = inverse_warp(&right, d_mon, WarpDirection::LeftRef)?;
    let zero = Tensor::zeros((), dtype, d_mon.device())?;
    Ok(DepthLossTerms {
        self_rc: reconstruction_loss(&left, &w_mon, cfg)?,
        masked_rc: zero.clone(),
        self_sm: smoothness_loss(&left, d_mon)?,
        masked_sm: zero,
        masked_l1: masked_mean(&d_ster.sub(d_mon)?.abs()?, proxy_valid)?,
    })
}

/// Per-pixel greedy reference mask, for tests and diagnostics.
///
/// For each pixel the reconstruction integrand is evaluated twice with the
/// warped right image taken from `d_mon` everywhere, except that the centre
/// sample is taken from `d_ster` in the second evaluation. The mask is 1 when
/// the substitution does not increase the integrand; ties select the proxy.
/// Pixels whose substituted sample falls outside the image select `d_mon`.
pub fn oracle_mask(
    view: StereoView<'_>,
    d_ster: &Tensor,
    d_mon: &Tensor,
    cfg: &PhotometricConfig,
) -> Result<Tensor> {
    check_same("oracle_mask", d_ster, d_mon)?;
    let left = view.left.to_dtype(DType::F64)?;
    let right = view.right.to_dtype(DType::F64)?;
    let d_ster = d_ster.detach().to_dtype(DType::F64)?;
    let d_mon = d_mon.detach().to_dtype(DType::F64)?;
    let (b, c, h, w) = left.dims4()?;
    let w_mon = inverse_warp(&right, &d_mon, WarpDirection::LeftRef)?;
    let w_ster = inverse_warp(&right, &d_ster, WarpDirection::LeftRef)?;

    let base = reconstruction_map(&left, &w_mon.image, cfg)?
        .flatten_all()?
        .to_vec1::<f64>()?;
    let lv = left.flatten_all()?.to_vec1::<f64>()?;
    let mon = w_mon.image.flatten_all()?.to_vec1::<f64>()?;
    let ster = w_ster.image.flatten_all()?.to_vec1::<f64>()?;
    let ster_valid = w_ster.validity.flatten_all()?.to_vec1::<f64>()?;
    let mon_valid = w_mon.validity.flatten_all()?.to_vec1::<f64>()?;
    let ds = d_ster.flatten_all()?.to_vec1::<f64>()?;
    let dm = d_mon.flatten_all()?.to_vec1::<f64>()?;

    let r = (cfg.patch / 2) as isize;
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let j = if i < 0 { -i } else if i >= n { 2 * (n - 1) - i } else { i };
        j.clamp(0, n - 1) as usize
    };
    let mut out = vec![0f64; b * h * w];
    for bi in 0..b {
        for y in 0..h {
            for x in 0..w {
                let pix = (bi * h + y) * w + x;
                if ds[pix] == dm[pix] {
                    out[pix] = 1.0;
                    continue;
                }
                if ster_valid[pix] == 0.0 {
                    out[pix] = if mon_valid[pix] == 0.0 { 1.0 } else { 0.0 };
                    continue;
                }
                let mut zncc_sum = 0.0;
                let mut l1_sum = 0.0;
                for ch in 0..c {
                    let plane = (bi * c + ch) * h * w;
                    let mut la = Vec::with_capacity(cfg.patch * cfg.patch);
                    let mut rb = Vec::with_capacity(cfg.patch * cfg.patch);
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let yy = reflect(y as isize + dy, h);
                            let xx = reflect(x as isize + dx, w);
                            let q = plane + yy * w + xx;
                            la.push(lv[q]);
                            rb.push(if yy == y && xx == x { ster[q] } else { mon[q] });
                        }
                    }
                    zncc_sum += zncc_of(&la, &rb, cfg.eps);
                    l1_sum += (lv[plane + y * w + x] - ster[plane + y * w + x]).abs();
                }
                let cf = c as f64;
                let substituted =
                    cfg.alpha * (1.0 - zncc_sum / cf) / 2.0 + (1.0 - cfg.alpha) * l1_sum / cf;
                out[pix] = if substituted <= base[pix] { 1.0 } else { 0.0 };
            }
        }
    }
    Ok(Tensor::from_vec(out, (b, 1, h, w), left.device())?.to_dtype(d_mon.dtype())?)
}

fn zncc_of(a: &[f64], b: &[f64], eps: f64) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cross = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cross += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cross / (va.sqrt() * vb.sqrt() + eps)
}
