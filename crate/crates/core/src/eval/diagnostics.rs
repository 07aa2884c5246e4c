use candle_core::DType;

use crate::data::StereoSample;
use crate::error::{Error, Result};
use crate::networks::MonoNet;
use crate::photometric::PhotometricConfig;
use crate::select::{oracle_mask, StereoView};
use crate::trainer::Batch;
use crate::types::ImageTensor;

/// Minimum mean per-channel 3x3 standard deviation for a pixel to count as
/// textured.
pub const TEXTURE_STD: f64 = 0.005;

/// Row-major `(H, W)` flags of pixels whose 3x3 neighbourhood has texture.
pub fn textured_pixels(image: &ImageTensor, min_std: f64) -> Result<Vec<bool>> {
    let (h, w) = (image.height(), image.width());
    let c = image.channels();
    let v = image.tensor().to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    let mut out = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut std_sum = 0.0;
            for ch in 0..c {
                let mut vals = Vec::with_capacity(9);
                for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        vals.push(v[(ch * h + yy) * w + xx]);
                    }
                }
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                std_sum += (vals.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
            }
            out[y * w + x] = std_sum / c as f64 > min_std;
        }
    }
    Ok(out)
}

/// Pixel counts behind [`MaskDiagnostics`]; additive across samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MaskCounts {
    pub corrupted: usize,
    pub corrupted_rejected: usize,
    pub corrupted_textured: usize,
    pub corrupted_textured_rejected: usize,
    pub compared: usize,
    pub agreed: usize,
    pub pixels: usize,
    pub rc_on: usize,
    pub sm_on: usize,
}

impl MaskCounts {
    /// `compared` runs over textured pixels that are not occluded.
    pub fn tally(
        m_rc: &[bool],
        m_sm: &[bool],
        oracle: &[bool],
        corrupted: &[bool],
        textured: &[bool],
        occluded: Option<&[bool]>,
    ) -> Self {
        let mut c = Self::default();
        for p in 0..m_rc.len() {
            c.pixels += 1;
            c.rc_on += usize::from(m_rc[p]);
            c.sm_on += usize::from(m_sm[p]);
            if corrupted[p] {
                c.corrupted += 1;
                c.corrupted_rejected += usize::from(!m_rc[p]);
                if textured[p] {
                    c.corrupted_textured += 1;
                    c.corrupted_textured_rejected += usize::from(!m_rc[p]);
                }
            }
            if textured[p] && !occluded.is_some_and(|o| o[p]) {
                c.compared += 1;
                c.agreed += usize::from(m_rc[p] == oracle[p]);
            }
        }
        c
    }

    pub fn merge(&self, o: &Self) -> Self {
        Self {
            corrupted: self.corrupted + o.corrupted,
            corrupted_rejected: self.corrupted_rejected + o.corrupted_rejected,
            corrupted_textured: self.corrupted_textured + o.corrupted_textured,
            corrupted_textured_rejected: self.corrupted_textured_rejected + o.corrupted_textured_rejected,
            compared: self.compared + o.compared,
            agreed: self.agreed + o.agreed,
            pixels: self.pixels + o.pixels,
            rc_on: self.rc_on + o.rc_on,
            sm_on: self.sm_on + o.sm_on,
        }
    }

    pub fn finish(&self) -> MaskDiagnostics {
        let ratio = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
        MaskDiagnostics {
            corrupted_rejected: ratio(self.corrupted_rejected, self.corrupted),
            corrupted_textured_rejected: ratio(self.corrupted_textured_rejected, self.corrupted_textured),
            oracle_agreement: ratio(self.agreed, self.compared),
            rc_fill: ratio(self.rc_on, self.pixels),
            sm_fill: ratio(self.sm_on, self.pixels),
            counts: *self,
        }
    }
}

/// Fractions are NaN when their denominator is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskDiagnostics {
    /// Corrupted pixels where the rc mask rejects the proxy.
    pub corrupted_rejected: f64,
    pub corrupted_textured_rejected: f64,
    /// Agreement of the rc mask with the oracle on textured, non-occluded
    /// pixels.
    pub oracle_agreement: f64,
    pub rc_fill: f64,
    pub sm_fill: f64,
    pub counts: MaskCounts,
}

/// Learned finest-scale masks of `net` compared against corruption metadata
/// and the per-pixel oracle. Samples must be at network resolution.
pub fn mask_diagnostics(net: &MonoNet, samples: &[StereoSample], cfg: &PhotometricConfig) -> Result<MaskDiagnostics> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ncfg = net.config();
    let mut total = MaskCounts::default();
    for s in samples {
        let spec = s
            .corruption
            .as_ref()
            .ok_or_else(|| Error::InvalidValue(format!("sample {} has no corruption metadata", s.id)))?;
        if (s.height(), s.width()) != (ncfg.height, ncfg.width) {
            return Err(Error::InvalidValue(format!(
                "sample {} is {}x{}, network expects {}x{}",
                s.id,
                s.height(),
                s.width(),
                ncfg.height,
                ncfg.width
            )));
        }
        let batch = Batch::from_samples(std::slice::from_ref(s), ncfg.height, ncfg.width, DType::F32)?;
        let out = net.forward(&batch.left, true)?;
        let valid = batch.proxy_valid.flatten_all()?.to_vec1::<f32>()?;
        let hard = |t: &candle_core::Tensor| -> Result<Vec<bool>> {
            Ok(t.flatten_all()?
                .to_vec1::<f32>()?
                .iter()
                .zip(&valid)
                .map(|(&l, &v)| l >= 0.0 && v > 0.0)
                .collect())
        };
        let (l_rc, l_sm) = &out.mask_logits[0];
        let m_rc = hard(l_rc)?;
        let m_sm = hard(l_sm)?;
        let view = StereoView {
            left: &batch.left,
            right: &batch.right,
        };
        let oracle: Vec<bool> = oracle_mask(view, &batch.proxy, &out.disparities[0], cfg)?
            .flatten_all()?
            .to_vec1::<f64>()?
            .iter()
            .map(|&v| v > 0.5)
            .collect();
        let corrupted = spec.indicator(s.height(), s.width());
        let textured = textured_pixels(&s.left, TEXTURE_STD)?;
        total = total.merge(&MaskCounts::tally(
            &m_rc,
            &m_sm,
            &oracle,
            &corrupted,
            &textured,
            s.occlusion.as_deref(),
        ));
    }
    Ok(total.finish())
}
