use std::path::Path;

use candle_core::{DType, Device, Tensor};

use super::metrics::{EvalReport, MetricSums, SampleMetrics};
use crate::data::SampleView;
use crate::error::{Error, Result};
use crate::networks::MonoNet;
use crate::ops::resize_bilinear;
use crate::trainer::{build_net, load_checkpoint, upsample_disparity};
use crate::types::ImageTensor;
use crate::warping::{disparity_to_depth, DepthConversion};

/// Anything that maps a single left image to a disparity map.
pub trait DisparityPredictor {
    /// Disparity as a `(1, 1, h, w)` tensor in pixels of its own resolution.
    fn predict(&self, left: &ImageTensor) -> Result<Tensor>;
}

impl DisparityPredictor for MonoNet {
    fn predict(&self, left: &ImageTensor) -> Result<Tensor> {
        let cfg = self.config();
        let x = resize_bilinear(&left.tensor().unsqueeze(0)?, cfg.height, cfg.width)?;
        let out = self.forward(&x, false)?;
        Ok(out.disparities[0].clone())
    }
}

/// Loads the network stored in a checkpoint.
pub fn load_net(path: &Path) -> Result<MonoNet> {
    let ckpt = load_checkpoint(path)?;
    let net = build_net(&ckpt.config, DType::F32)?;
    net.params().load(&ckpt.params)?;
    Ok(net)
}

/// Ground-truth depth, 0 where the disparity is invalid.
fn gt_depth(disparity: &[f64], fb: f64, conv: DepthConversion) -> Vec<f64> {
    disparity
        .iter()
        .map(|&d| if d > conv.min_disparity { fb / d } else { 0.0 })
        .collect()
}

/// Predicts from the left image of every sample and scores against its
/// ground truth. Only the left image and the ground truth are read.
pub fn evaluate<S: SampleView>(predictor: &dyn DisparityPredictor, samples: &[S], cap: f64) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let conv = DepthConversion::default();
    let mut total = MetricSums::default();
    let mut per_sample = Vec::with_capacity(samples.len());
    for s in samples {
        let gt = s
            .gt()
            .ok_or_else(|| Error::InvalidValue(format!("sample {} has no ground truth", s.id())))?;
        let (h, w) = (gt.height(), gt.width());
        let pred = predictor.predict(s.left())?;
        let pred = upsample_disparity(&pred.to_dtype(DType::F64)?, h, w)?;
        let pred = pred.flatten_all()?.to_vec1::<f64>()?;
        let rig = s.rig();
        let pred_depth = disparity_to_depth(&pred, &rig, conv);
        let gt_v: Vec<f64> = gt.to_vec()?.iter().map(|&v| v as f64).collect();
        let sums = MetricSums::accumulate(&pred_depth, &gt_depth(&gt_v, rig.fb(), conv), cap)?;
        per_sample.push(SampleMetrics {
            id: s.id().to_string(),
            metrics: sums.finish()?,
        });
        total = total.merge(&sums);
    }
    Ok(EvalReport {
        overall: total.finish()?,
        per_sample,
    })
}

/// Predictor returning a fixed disparity map, e.g. the ground truth.
pub struct FixedPredictor(pub Tensor);

impl FixedPredictor {
    pub fn from_values(values: Vec<f64>, height: usize, width: usize) -> Result<Self> {
        Ok(Self(Tensor::from_vec(values, (1, 1, height, width), &Device::Cpu)?))
    }
}

impl DisparityPredictor for FixedPredictor {
    fn predict(&self, _left: &ImageTensor) -> Result<Tensor> {
        Ok(self.0.clone())
    }
}
