use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_CAP_M: f64 = 80.0;
pub const MIN_PRED_DEPTH_M: f64 = 1e-3;

/// The standard depth error and accuracy measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_pixels: usize,
}

/// Per-pixel sums behind [`Metrics`]. Merging is associative, so partial
/// results can be combined in any order (pixel-weighted aggregation).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricSums {
    pub n: usize,
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub sq: f64,
    pub sq_log: f64,
    pub a1: usize,
    pub a2: usize,
    pub a3: usize,
}

impl MetricSums {
    /// Adds every pixel with `0 < gt <= cap`; predictions are clamped to
    /// `[1e-3, cap]`.
    pub fn accumulate(pred: &[f64], gt: &[f64], cap: f64) -> Result<Self> {
        if pred.len() != gt.len() {
            return Err(Error::shape("depth_metrics", &[pred.len()], &[gt.len()]));
        }
        let mut s = Self::default();
        for (&d, &g) in pred.iter().zip(gt) {
            if !(g > 0.0 && g <= cap) {
                continue;
            }
            if !d.is_finite() {
                return Err(Error::NonFinite {
                    what: "predicted depth".into(),
                });
            }
            let d = d.clamp(MIN_PRED_DEPTH_M, cap);
            let diff = d - g;
            s.n += 1;
            s.abs_rel += diff.abs() / g;
            s.sq_rel += diff * diff / g;
            s.sq += diff * diff;
            s.sq_log += (d.ln() - g.ln()).powi(2);
            let ratio = (d / g).max(g / d);
            s.a1 += usize::from(ratio < 1.25);
            s.a2 += usize::from(ratio < 1.25f64.powi(2));
            s.a3 += usize::from(ratio < 1.25f64.powi(3));
        }
        Ok(s)
    }

    pub fn merge(&self, o: &Self) -> Self {
        Self {
            n: self.n + o.n,
            abs_rel: self.abs_rel + o.abs_rel,
            sq_rel: self.sq_rel + o.sq_rel,
            sq: self.sq + o.sq,
            sq_log: self.sq_log + o.sq_log,
            a1: self.a1 + o.a1,
            a2: self.a2 + o.a2,
            a3: self.a3 + o.a3,
        }
    }

    pub fn finish(&self) -> Result<Metrics> {
        if self.n == 0 {
            return Err(Error::NoValidPixels);
        }
        let n = self.n as f64;
        Ok(Metrics {
            abs_rel: self.abs_rel / n,
            sq_rel: self.sq_rel / n,
            rmse: (self.sq / n).sqrt(),
            rmse_log: (self.sq_log / n).sqrt(),
            delta1: self.a1 as f64 / n,
            delta2: self.a2 as f64 / n,
            delta3: self.a3 as f64 / n,
            n_pixels: self.n,
        })
    }
}

pub fn depth_metrics(pred: &[f64], gt: &[f64], cap: f64) -> Result<Metrics> {
    MetricSums::accumulate(pred, gt, cap)?.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleMetrics {
    pub id: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Pixel-weighted over all samples.
    pub overall: Metrics,
    pub per_sample: Vec<SampleMetrics>,
}

pub const REPORT_HEADER: [&str; 8] = ["abs_rel", "sq_rel", "rmse", "rmse_log", "a1", "a2", "a3", "n_pixels"];

impl Metrics {
    pub fn csv_row(&self) -> Vec<String> {
        let mut row: Vec<String> = [
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_log,
            self.delta1,
            self.delta2,
            self.delta3,
        ]
        .iter()
        .map(|v| format!("{v:.9}"))
        .collect();
        row.push(self.n_pixels.to_string());
        row
    }
}

impl EvalReport {
    /// One `id` column plus [`REPORT_HEADER`]; the first row, id `all`, is
    /// the overall result.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let err = |e: csv::Error| Error::Malformed {
            path: path.to_path_buf(),
            msg: e.to_string(),
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        let mut header = vec!["id"];
        header.extend(REPORT_HEADER);
        w.write_record(&header).map_err(err)?;
        let mut row = vec!["all".to_string()];
        row.extend(self.overall.csv_row());
        w.write_record(&row).map_err(err)?;
        for s in &self.per_sample {
            let mut row = vec![s.id.clone()];
            row.extend(s.metrics.csv_row());
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
