//! PNG figures: loss curves and disparity / mask panels.

use std::path::Path;

use candle_core::DType;
use image::{Rgb, RgbImage};

use crate::data::StereoSample;
use crate::error::{Error, Result};
use crate::networks::MonoNet;
use crate::trainer::Batch;
use crate::types::ImageTensor;

const CURVE_COLOURS: [[u8; 3]; 4] = [[20, 20, 20], [200, 40, 40], [40, 120, 200], [40, 160, 60]];

fn save(path: &Path, img: &RgbImage) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn line(img: &mut RgbImage, (x0, y0): (f64, f64), (x1, y1): (f64, f64), c: [u8; 3]) {
    let n = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let (x, y) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, Rgb(c));
        }
    }
}

/// Plots `log10` of the L_total, L_depth, L_mask and L_TS columns of a
/// metrics CSV against the epoch (black, red, blue, green).
pub fn plot_loss_curves(metrics_csv: &Path, out: &Path) -> Result<()> {
    if !metrics_csv.exists() {
        return Err(Error::MissingFile(metrics_csv.to_path_buf()));
    }
    let malformed = |msg: String| Error::Malformed {
        path: metrics_csv.to_path_buf(),
        msg,
    };
    let mut reader = csv::Reader::from_path(metrics_csv).map_err(|e| malformed(e.to_string()))?;
    let header = reader.headers().map_err(|e| malformed(e.to_string()))?.clone();
    let cols: Vec<usize> = ["L_total", "L_depth", "L_mask", "L_TS"]
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| malformed(format!("missing column {name}")))
        })
        .collect::<Result<_>>()?;
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); cols.len()];
    for rec in reader.records() {
        let rec = rec.map_err(|e| malformed(e.to_string()))?;
        for (k, &c) in cols.iter().enumerate() {
            let v: f64 = rec[c].parse().map_err(|_| malformed(format!("bad number `{}`", &rec[c])))?;
            series[k].push(if v > 0.0 { v.log10() } else { f64::NAN });
        }
    }
    let (w, h, m) = (640u32, 360u32, 30.0);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let (x_lo, x_hi, y_lo, y_hi) = (m, w as f64 - m, h as f64 - m, m);
    line(&mut img, (x_lo, y_lo), (x_hi, y_lo), [120; 3]);
    line(&mut img, (x_lo, y_lo), (x_lo, y_hi), [120; 3]);
    let finite = series.iter().flatten().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let n = series[0].len();
    if n == 0 || !lo.is_finite() {
        return save(out, &img);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let px = |i: usize| x_lo + (x_hi - x_lo) * if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
    let py = |v: f64| y_lo + (y_hi - y_lo) * (v - lo) / span;
    for (k, s) in series.iter().enumerate() {
        for i in 0..n {
            if !s[i].is_finite() {
                continue;
            }
            let p = (px(i), py(s[i]));
            if i + 1 < n && s[i + 1].is_finite() {
                line(&mut img, p, (px(i + 1), py(s[i + 1])), CURVE_COLOURS[k]);
            } else {
                line(&mut img, p, p, CURVE_COLOURS[k]);
            }
        }
    }
    save(out, &img)
}

/// One tile of a panel figure.
pub enum Panel {
    Rgb(ImageTensor),
    /// Row-major scalar map shown in grey, `0..=max` mapped to black..white.
    Scalar { values: Vec<f32>, height: usize, width: usize, max: f32 },
}

impl Panel {
    fn size(&self) -> (usize, usize) {
        match self {
            Panel::Rgb(i) => (i.height(), i.width()),
            Panel::Scalar { height, width, .. } => (*height, *width),
        }
    }

    fn pixel(&self, hwc: &Option<Vec<f32>>, y: usize, x: usize) -> [u8; 3] {
        let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        match self {
            Panel::Rgb(i) => {
                let v = hwc.as_ref().expect("rgb panel data");
                let p = (y * i.width() + x) * 3;
                [q(v[p]), q(v[p + 1]), q(v[p + 2])]
            }
            Panel::Scalar { values, width, max, .. } => {
                let g = q(if *max > 0.0 { values[y * width + x] / max } else { 0.0 });
                [g, g, g]
            }
        }
    }
}

/// Tiles `rows` of panels into one image with 2 px white gutters.
pub fn save_panels(path: &Path, rows: &[Vec<Panel>]) -> Result<()> {
    let gutter = 2;
    let cell_h = rows.iter().flatten().map(|p| p.size().0).max().unwrap_or(1);
    let cell_w = rows.iter().flatten().map(|p| p.size().1).max().unwrap_or(1);
    let n_cols = rows.iter().map(|r| r.len()).max().unwrap_or(1);
    let img_w = n_cols * (cell_w + gutter) + gutter;
    let img_h = rows.len() * (cell_h + gutter) + gutter;
    let mut img = RgbImage::from_pixel(img_w as u32, img_h as u32, Rgb([255, 255, 255]));
    for (r, row) in rows.iter().enumerate() {
        for (c, panel) in row.iter().enumerate() {
            let hwc = match panel {
                Panel::Rgb(i) => Some(i.to_hwc()?),
                Panel::Scalar { .. } => None,
            };
            let (h, w) = panel.size();
            let (oy, ox) = (gutter + r * (cell_h + gutter), gutter + c * (cell_w + gutter));
            for y in 0..h {
                for x in 0..w {
                    img.put_pixel((ox + x) as u32, (oy + y) as u32, Rgb(panel.pixel(&hwc, y, x)));
                }
            }
        }
    }
    save(path, &img)
}

/// Left image, ground truth, proxy, prediction, rc mask and sm mask of one
/// sample (disparities share one grey scale).
pub fn sample_panels(net: &MonoNet, sample: &StereoSample) -> Result<Vec<Panel>> {
    let cfg = net.config();
    let batch = Batch::from_samples(std::slice::from_ref(sample), cfg.height, cfg.width, DType::F32)?;
    let out = net.forward(&batch.left, true)?;
    let (h, w) = (cfg.height, cfg.width);
    let flat = |t: &candle_core::Tensor| -> Result<Vec<f32>> { Ok(t.flatten_all()?.to_vec1::<f32>()?) };
    let pred = flat(&out.disparities[0])?;
    let proxy = flat(&batch.proxy)?;
    let gt = match &sample.gt {
        Some(g) if (g.height(), g.width()) == (h, w) => g.to_vec()?,
        _ => vec![0.0; h * w],
    };
    let max = pred.iter().chain(&proxy).chain(&gt).fold(0f32, |a, &b| a.max(b));
    let valid = flat(&batch.proxy_valid)?;
    let mask = |t: &candle_core::Tensor| -> Result<Vec<f32>> {
        Ok(flat(t)?
            .iter()
            .zip(&valid)
            .map(|(&l, &v)| if l >= 0.0 && v > 0.0 { 1.0 } else { 0.0 })
            .collect())
    };
    let scalar = |values: Vec<f32>, max: f32| Panel::Scalar {
        values,
        height: h,
        width: w,
        max,
    };
    let left = ImageTensor::new(batch.left.squeeze(0)?)?;
    Ok(vec![
        Panel::Rgb(left),
        scalar(gt, max),
        scalar(proxy, max),
        scalar(pred, max),
        scalar(mask(&out.mask_logits[0].0)?, 1.0),
        scalar(mask(&out.mask_logits[0].1)?, 1.0),
    ])
}
