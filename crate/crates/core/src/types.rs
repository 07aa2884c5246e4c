//! Value types shared across the crate.
//!
//! Tensors are stored channel-first. Single samples use `(C, H, W)`; batched
//! loss code works on `(B, C, H, W)`.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_finite(t: &Tensor, what: &str) -> Result<()> {
    let v = t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what: what.to_string(),
        })
    }
}

/// RGB image with values in `[0, 1]`, shape `(3, H, W)`.
#[derive(Debug, Clone)]
pub struct ImageTensor(Tensor);

impl ImageTensor {
    pub fn new(t: Tensor) -> Result<Self> {
        let dims = t.dims();
        if dims.len() != 3 || dims[0] != 3 || dims[1] == 0 || dims[2] == 0 {
            return Err(Error::InvalidValue(format!(
                "image must have shape (3, H, W), got {dims:?}"
            )));
        }
        let t = t.to_dtype(DType::F32)?;
        let v = t.flatten_all()?.to_vec1::<f32>()?;
        if v.iter().any(|x| !x.is_finite() || *x < 0.0 || *x > 1.0) {
            return Err(Error::InvalidValue(
                "image values must be finite and within [0, 1]".into(),
            ));
        }
        Ok(Self(t))
    }

    /// Builds an image from `(H, W, C)` interleaved values.
    pub fn from_hwc(data: &[f32], height: usize, width: usize) -> Result<Self> {
        let t = Tensor::from_slice(data, (height, width, 3), &Device::Cpu)?.permute((2, 0, 1))?;
        Self::new(t.contiguous()?)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn height(&self) -> usize {
        self.0.dims()[1]
    }

    pub fn width(&self) -> usize {
        self.0.dims()[2]
    }

    pub fn channels(&self) -> usize {
        self.0.dims()[0]
    }

    /// Pixel count, the `N` in the per-pixel loss means.
    pub fn pixel_count(&self) -> usize {
        self.height() * self.width()
    }

    pub fn to_hwc(&self) -> Result<Vec<f32>> {
        Ok(self
            .0
            .permute((1, 2, 0))?
            .contiguous()?
            .flatten_all()?
            .to_vec1::<f32>()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisparityRole {
    Mono,
    Proxy,
    VirtualRc,
    VirtualSm,
    GroundTruth,
}

/// Horizontal disparity in pixels of its own resolution, shape `(H, W)`.
#[derive(Debug, Clone)]
pub struct DisparityMap {
    data: Tensor,
    role: DisparityRole,
}

impl DisparityMap {
    pub fn new(data: Tensor, role: DisparityRole) -> Result<Self> {
        let dims = data.dims().to_vec();
        if dims.len() != 2 {
            return Err(Error::InvalidValue(format!(
                "disparity must have shape (H, W), got {dims:?}"
            )));
        }
        let data = data.to_dtype(DType::F32)?;
        let v = data.flatten_all()?.to_vec1::<f32>()?;
        let w = dims[1] as f32;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "disparity".into(),
            });
        }
        if v.iter().any(|x| *x < 0.0 || *x > w) {
            return Err(Error::InvalidValue(format!(
                "disparity values must lie in [0, {w}]"
            )));
        }
        Ok(Self { data, role })
    }

    pub fn from_vec(values: Vec<f32>, height: usize, width: usize, role: DisparityRole) -> Result<Self> {
        Self::new(Tensor::from_vec(values, (height, width), &Device::Cpu)?, role)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn role(&self) -> DisparityRole {
        self.role
    }

    pub fn with_role(&self, role: DisparityRole) -> Self {
        Self {
            data: self.data.clone(),
            role,
        }
    }

    pub fn height(&self) -> usize {
        self.data.dims()[0]
    }

    pub fn width(&self) -> usize {
        self.data.dims()[1]
    }

    pub fn to_vec(&self) -> Result<Vec<f32>> {
        Ok(self.data.flatten_all()?.to_vec1::<f32>()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskRole {
    Rc,
    Sm,
}

/// Binary per-pixel selector together with the logits it was thresholded
/// from. `hard[p] = 1` exactly when `sigmoid(logits[p]) >= 0.5`, i.e. when
/// `logits[p] >= 0`, unless the pixel is gated off.
#[derive(Debug, Clone)]
pub struct SelectionMask {
    logits: Tensor,
    hard: Tensor,
    gate: Option<Tensor>,
    role: MaskRole,
}

impl SelectionMask {
    /// `gate` marks pixels where selection is allowed at all (e.g. where the
    /// proxy is valid); gated-off pixels are forced to 0.
    pub fn from_logits(logits: &Tensor, gate: Option<&Tensor>, role: MaskRole) -> Result<Self> {
        let mut hard = logits.detach().ge(0f64)?.to_dtype(logits.dtype())?;
        if let Some(g) = gate {
            if g.dims() != logits.dims() {
                return Err(Error::shape("SelectionMask gate", g.dims(), logits.dims()));
            }
            hard = (hard * g.to_dtype(logits.dtype())?)?;
        }
        Ok(Self {
            logits: logits.clone(),
            hard,
            gate: gate.map(|g| g.detach()),
            role,
        })
    }

    /// A mask with fixed hard values; logits are set to ±8 accordingly.
    pub fn from_hard(hard: &Tensor, role: MaskRole) -> Result<Self> {
        let logits = hard.detach().affine(16.0, -8.0)?;
        Self::from_logits(&logits, None, role)
    }

    pub fn logits(&self) -> &Tensor {
        &self.logits
    }

    pub fn hard(&self) -> &Tensor {
        &self.hard
    }

    pub fn gate(&self) -> Option<&Tensor> {
        self.gate.as_ref()
    }

    pub fn role(&self) -> MaskRole {
        self.role
    }

    /// `sigmoid(logits)`, zeroed where gated off. Carries gradient.
    pub fn prob(&self) -> Result<Tensor> {
        let p = candle_nn::ops::sigmoid(&self.logits)?;
        Ok(match &self.gate {
            Some(g) => (p * g.to_dtype(self.logits.dtype())?)?,
            None => p,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Teacher,
    Student,
}

/// Multi-scale features, finest first. Each level is `(B, C, H, W)`.
#[derive(Debug, Clone)]
pub struct FeaturePyramid {
    pub levels: Vec<Tensor>,
    pub origin: Origin,
}

impl FeaturePyramid {
    pub fn new(levels: Vec<Tensor>, origin: Origin) -> Self {
        Self { levels, origin }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// `(C, H, W)` of each level.
    pub fn shapes(&self) -> Vec<(usize, usize, usize)> {
        self.levels
            .iter()
            .map(|t| {
                let d = t.dims();
                let n = d.len();
                (d[n - 3], d[n - 2], d[n - 1])
            })
            .collect()
    }

    /// True when every level halves the spatial dims and doubles the channels
    /// of the previous one.
    pub fn obeys_halving_contract(&self) -> bool {
        self.shapes().windows(2).all(|w| {
            let (c0, h0, w0) = w[0];
            let (c1, h1, w1) = w[1];
            c1 == 2 * c0 && h0 == 2 * h1 && w0 == 2 * w1
        })
    }

    pub fn detach(&self) -> Self {
        Self {
            levels: self.levels.iter().map(|t| t.detach()).collect(),
            origin: self.origin,
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for (i, l) in self.levels.iter().enumerate() {
            check_finite(l, &format!("pyramid level {i}"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub focal_length_px: f64,
    pub baseline_m: f64,
}

impl CameraRig {
    pub fn new(focal_length_px: f64, baseline_m: f64) -> Result<Self> {
        if !(focal_length_px > 0.0 && focal_length_px.is_finite()) {
            return Err(Error::InvalidValue("focal_length_px must be > 0".into()));
        }
        if !(baseline_m > 0.0 && baseline_m.is_finite()) {
            return Err(Error::InvalidValue("baseline_m must be > 0".into()));
        }
        Ok(Self {
            focal_length_px,
            baseline_m,
        })
    }

    /// Focal length times baseline; depth = this / disparity.
    pub fn fb(&self) -> f64 {
        self.focal_length_px * self.baseline_m
    }

    /// The same rig seen at a different image width (focal scales with width).
    pub fn rescaled(&self, from_width: usize, to_width: usize) -> Self {
        Self {
            focal_length_px: self.focal_length_px * to_width as f64 / from_width as f64,
            baseline_m: self.baseline_m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub lambda_mask: f64,
    pub lambda_ts: f64,
    pub lambda_cd: f64,
    pub lambda_sd: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.85,
            lambda_mask: 1.0,
            lambda_ts: 1e-4,
            lambda_cd: 1.0,
            lambda_sd: 1e5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config("alpha", "must lie in [0, 1]"));
        }
        for (k, v) in [
            ("lambda_mask", self.lambda_mask),
            ("lambda_ts", self.lambda_ts),
            ("lambda_cd", self.lambda_cd),
            ("lambda_sd", self.lambda_sd),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(k, "must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn ts_enabled(&self) -> bool {
        self.lambda_ts > 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_out_of_range() {
        let t = Tensor::full(1.5f32, (3, 2, 2), &Device::Cpu).unwrap();
        assert!(ImageTensor::new(t).is_err());
        let t = Tensor::full(0.5f32, (1, 2, 2), &Device::Cpu).unwrap();
        assert!(ImageTensor::new(t).is_err());
    }

    #[test]
    fn disparity_bounds() {
        assert!(DisparityMap::from_vec(vec![0.0, 4.0], 1, 2, DisparityRole::Proxy).is_err());
        assert!(DisparityMap::from_vec(vec![-0.1, 1.0], 1, 2, DisparityRole::Proxy).is_err());
        assert!(DisparityMap::from_vec(vec![f32::NAN, 1.0], 1, 2, DisparityRole::Proxy).is_err());
        let d = DisparityMap::from_vec(vec![0.0, 2.0], 1, 2, DisparityRole::Proxy).unwrap();
        assert_eq!(d.to_vec().unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn hard_mask_threshold_and_gate() {
        let l = Tensor::new(&[[-0.1f64, 0.0, 3.0]], &Device::Cpu).unwrap();
        let m = SelectionMask::from_logits(&l, None, MaskRole::Rc).unwrap();
        assert_eq!(m.hard().to_vec2::<f64>().unwrap(), vec![vec![0.0, 1.0, 1.0]]);
        let g = Tensor::new(&[[1f64, 1.0, 0.0]], &Device::Cpu).unwrap();
        let m = SelectionMask::from_logits(&l, Some(&g), MaskRole::Rc).unwrap();
        assert_eq!(m.hard().to_vec2::<f64>().unwrap(), vec![vec![0.0, 1.0, 0.0]]);
        assert_eq!(m.prob().unwrap().to_vec2::<f64>().unwrap()[0][2], 0.0);
    }

    #[test]
    fn pyramid_contract() {
        let dev = Device::Cpu;
        let p = FeaturePyramid::new(
            vec![
                Tensor::zeros((1, 4, 8, 8), DType::F32, &dev).unwrap(),
                Tensor::zeros((1, 8, 4, 4), DType::F32, &dev).unwrap(),
            ],
            Origin::Student,
        );
        assert!(p.obeys_halving_contract());
        let q = FeaturePyramid::new(
            vec![
                Tensor::zeros((1, 4, 8, 8), DType::F32, &dev).unwrap(),
                Tensor::zeros((1, 4, 4, 4), DType::F32, &dev).unwrap(),
            ],
            Origin::Student,
        );
        assert!(!q.obeys_halving_contract());
    }
}
