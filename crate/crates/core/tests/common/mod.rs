//! Independent loop-based reference implementations and test utilities.
//! Nothing here calls into the tensor code paths under test.
#![allow(dead_code)]

use candle_core::{DType, Device, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Channel-major `(C, H, W)` volume.
#[derive(Debug, Clone)]
pub struct Vol {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Vol {
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    pub fn tensor(&self) -> Tensor {
        Tensor::from_vec(self.data.clone(), (1, self.c, self.h, self.w), &Device::Cpu).unwrap()
    }

    pub fn tensor_f32(&self) -> Tensor {
        self.tensor().to_dtype(DType::F32).unwrap()
    }
}

/// `(1, 1, H, W)` tensor of a row-major map.
pub fn map_tensor(v: &[f64], h: usize, w: usize) -> Tensor {
    Tensor::from_vec(v.to_vec(), (1, 1, h, w), &Device::Cpu).unwrap()
}

pub fn values(t: &Tensor) -> Vec<f64> {
    t.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap()
}

pub fn scalar(t: &Tensor) -> f64 {
    let v = values(t);
    assert_eq!(v.len(), 1);
    v[0]
}

/// Smooth random image in `[0.1, 0.9]`: a few random plane waves per
/// channel plus a little noise.
pub fn smooth_image(r: &mut impl Rng, c: usize, h: usize, w: usize) -> Vol {
    let mut data = vec![0.0; c * h * w];
    for ch in 0..c {
        let waves: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    r.random_range(-0.9..0.9),
                    r.random_range(-0.9..0.9),
                    r.random_range(0.0..6.3),
                    r.random_range(0.05..0.12),
                )
            })
            .collect();
        for y in 0..h {
            for x in 0..w {
                let mut v = 0.5;
                for &(fx, fy, ph, a) in &waves {
                    v += a * (fx * x as f64 + fy * y as f64 + ph).sin();
                }
                v += r.random_range(-0.01..0.01);
                data[(ch * h + y) * w + x] = v.clamp(0.1, 0.9);
            }
        }
    }
    Vol { c, h, w, data }
}

pub fn random_vol(r: &mut impl Rng, c: usize, h: usize, w: usize, lo: f64, hi: f64) -> Vol {
    Vol {
        c,
        h,
        w,
        data: (0..c * h * w).map(|_| r.random_range(lo..hi)).collect(),
    }
}

/// Disparities whose sampling coordinates stay inside the image and whose
/// fractional parts stay away from the integers (the warp's kinks).
pub fn interior_disparity(r: &mut impl Rng, h: usize, w: usize, max: f64) -> Vec<f64> {
    let mut d = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let hi = (x as f64 - 0.2).min(max);
            d[y * w + x] = loop {
                let v = if hi > 0.2 { r.random_range(0.1..hi) } else { 0.0 };
                let f = v - v.floor();
                if v == 0.0 || (f > 0.05 && f < 0.95) {
                    break v;
                }
            };
        }
    }
    d
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    j as usize
}

/// Left-reference bilinear warp: samples `src` at `x - d`. Returns the image
/// and per-pixel validity (coordinate inside `[0, W - 1]`).
pub fn warp(src: &Vol, d: &[f64]) -> (Vol, Vec<bool>) {
    let (c, h, w) = (src.c, src.h, src.w);
    let mut out = vec![0.0; c * h * w];
    let mut valid = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let coord = x as f64 - d[y * w + x];
            valid[y * w + x] = coord >= 0.0 && coord <= (w - 1) as f64;
            let cc = coord.clamp(0.0, (w - 1) as f64);
            let x0 = cc.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let t = cc - x0 as f64;
            for ch in 0..c {
                out[(ch * h + y) * w + x] = (1.0 - t) * src.at(ch, y, x0) + t * src.at(ch, y, x1);
            }
        }
    }
    (Vol { c, h, w, data: out }, valid)
}

/// Reconstruction integrand at one pixel.
pub fn rc_integrand(a: &Vol, b: &Vol, y: usize, x: usize, alpha: f64, patch: usize, eps: f64) -> f64 {
    let r = (patch / 2) as isize;
    let n = (patch * patch) as f64;
    let mut zncc = 0.0;
    let mut l1 = 0.0;
    for ch in 0..a.c {
        let mut pa = Vec::new();
        let mut pb = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                let yy = reflect(y as isize + dy, a.h);
                let xx = reflect(x as isize + dx, a.w);
                pa.push(a.at(ch, yy, xx));
                pb.push(b.at(ch, yy, xx));
            }
        }
        let ma = pa.iter().sum::<f64>() / n;
        let mb = pb.iter().sum::<f64>() / n;
        let (mut cross, mut va, mut vb) = (0.0, 0.0, 0.0);
        for k in 0..pa.len() {
            cross += (pa[k] - ma) * (pb[k] - mb);
            va += (pa[k] - ma).powi(2);
            vb += (pb[k] - mb).powi(2);
        }
        zncc += cross / (va.sqrt() * vb.sqrt() + eps);
        l1 += (a.at(ch, y, x) - b.at(ch, y, x)).abs();
    }
    let c = a.c as f64;
    alpha * (1.0 - zncc / c) / 2.0 + (1.0 - alpha) * l1 / c
}

/// Mean integrand over pixels where `region` holds; 0 if none.
pub fn rc_loss_in(a: &Vol, b: &Vol, region: &[bool], alpha: f64) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..a.h {
        for x in 0..a.w {
            if region[y * a.w + x] {
                sum += rc_integrand(a, b, y, x, alpha, 3, 1e-6);
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Reconstruction loss of `left` from `right` warped by `d`, over valid pixels.
pub fn rc_loss(left: &Vol, right: &Vol, d: &[f64], alpha: f64) -> f64 {
    let (recon, valid) = warp(right, d);
    rc_loss_in(left, &recon, &valid, alpha)
}

/// Per-pixel edge-aware smoothness integrand.
pub fn sm_map(img: &Vol, d: &[f64]) -> Vec<f64> {
    let (h, w) = (img.h, img.w);
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut v = 0.0;
            if x + 1 < w {
                let gi: f64 = (0..img.c).map(|c| (img.at(c, y, x + 1) - img.at(c, y, x)).abs()).sum::<f64>()
                    / img.c as f64;
                v += (d[y * w + x + 1] - d[y * w + x]).abs() * (-gi).exp();
            }
            if y + 1 < h {
                let gi: f64 = (0..img.c).map(|c| (img.at(c, y + 1, x) - img.at(c, y, x)).abs()).sum::<f64>()
                    / img.c as f64;
                v += (d[(y + 1) * w + x] - d[y * w + x]).abs() * (-gi).exp();
            }
            out[y * w + x] = v;
        }
    }
    out
}

pub fn sm_loss(img: &Vol, d: &[f64]) -> f64 {
    let m = sm_map(img, d);
    m.iter().sum::<f64>() / m.len() as f64
}

fn masked_mean(v: &[f64], m: &[bool]) -> f64 {
    let n = m.iter().filter(|&&b| b).count();
    if n == 0 {
        return 0.0;
    }
    v.iter().zip(m).filter(|(_, &b)| b).map(|(a, _)| a).sum::<f64>() / n as f64
}

/// Selection between proxy and monocular disparity.
pub fn select(mask: &[bool], d_ster: &[f64], d_mon: &[f64]) -> Vec<f64> {
    mask.iter()
        .zip(d_ster.iter().zip(d_mon))
        .map(|(&m, (&s, &o))| if m { s } else { o })
        .collect()
}

/// Mask loss: reconstruction with the rc selection plus smoothness of the sm
/// selection.
pub fn mask_loss(l: &Vol, r: &Vol, m_rc: &[bool], m_sm: &[bool], ds: &[f64], dm: &[f64], alpha: f64) -> f64 {
    rc_loss(l, r, &select(m_rc, ds, dm), alpha) + sm_loss(l, &select(m_sm, ds, dm))
}

/// Depth loss with hard masks.
pub fn depth_loss(l: &Vol, r: &Vol, m_rc: &[bool], m_sm: &[bool], ds: &[f64], dm: &[f64], alpha: f64) -> f64 {
    let (w_mon, v_mon) = warp(r, dm);
    let (w_ster, v_ster) = warp(r, ds);
    let self_rc = rc_loss_in(l, &w_mon, &v_mon, alpha);
    let region: Vec<bool> = (0..dm.len()).map(|p| m_rc[p] && v_mon[p] && v_ster[p]).collect();
    let masked_rc = rc_loss_in(&w_ster, &w_mon, &region, alpha);
    let self_sm = sm_loss(l, dm);
    let masked_sm = masked_mean(&sm_map(&w_ster, dm), m_sm);
    let agree: Vec<bool> = (0..dm.len()).map(|p| m_rc[p] && m_sm[p]).collect();
    let l1: Vec<f64> = ds.iter().zip(dm).map(|(a, b)| (a - b).abs()).collect();
    self_rc + masked_rc + self_sm + masked_sm + masked_mean(&l1, &agree)
}

pub fn fd_loss(t: &[Vol], s: &[Vol]) -> f64 {
    t.iter()
        .zip(s)
        .enumerate()
        .map(|(i, (a, b))| {
            let m = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data.len() as f64;
            0.5f64.powi(i as i32) * m
        })
        .sum()
}

pub fn channel_means(v: &Vol) -> Vec<f64> {
    let n = (v.h * v.w) as f64;
    (0..v.c)
        .map(|c| v.data[c * v.h * v.w..(c + 1) * v.h * v.w].iter().sum::<f64>() / n)
        .collect()
}

pub fn cd_loss(t: &[Vol], s: &[Vol]) -> f64 {
    t.iter()
        .zip(s)
        .map(|(a, b)| {
            let (wa, wb) = (channel_means(a), channel_means(b));
            wa.iter().zip(&wb).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.c as f64
        })
        .sum()
}

/// Row-normalised Gram matrix, row-major `C x C`.
pub fn gram(v: &Vol) -> Vec<f64> {
    let n = v.h * v.w;
    let mut z = vec![0.0; v.c * v.c];
    for i in 0..v.c {
        for j in 0..v.c {
            z[i * v.c + j] = (0..n).map(|k| v.data[i * n + k] * v.data[j * n + k]).sum();
        }
    }
    for i in 0..v.c {
        let norm = (0..v.c).map(|j| z[i * v.c + j].powi(2)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for j in 0..v.c {
                z[i * v.c + j] /= norm;
            }
        }
    }
    z
}

pub fn sd_loss(t: &[Vol], s: &[Vol]) -> f64 {
    t.iter()
        .zip(s)
        .map(|(a, b)| {
            let (ga, gb) = (gram(a), gram(b));
            let fro = ga.iter().zip(&gb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            fro / (a.c * a.c) as f64
        })
        .sum()
}

/// `[abs_rel, sq_rel, rmse, rmse_log, d1, d2, d3]` by a direct loop.
pub fn metrics(pred: &[f64], gt: &[f64], cap: f64) -> [f64; 7] {
    let mut acc = [0.0; 7];
    let mut n = 0.0;
    for (&d, &g) in pred.iter().zip(gt) {
        if g <= 0.0 || g > cap {
            continue;
        }
        let d = d.max(1e-3).min(cap);
        n += 1.0;
        acc[0] += (d - g).abs() / g;
        acc[1] += (d - g) * (d - g) / g;
        acc[2] += (d - g) * (d - g);
        acc[3] += (d.ln() - g.ln()) * (d.ln() - g.ln());
        let ratio = if d / g > g / d { d / g } else { g / d };
        for k in 0..3 {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                acc[4 + k] += 1.0;
            }
        }
    }
    [
        acc[0] / n,
        acc[1] / n,
        (acc[2] / n).sqrt(),
        (acc[3] / n).sqrt(),
        acc[4] / n,
        acc[5] / n,
        acc[6] / n,
    ]
}

/// Central finite differences of `f` at `x` along the coordinates `idx`.
pub fn numeric_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64], idx: &[usize], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    idx.iter()
        .map(|&i| {
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, 0 when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Up to `k` distinct coordinates out of `n`.
pub fn sample_indices(r: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    use rand::seq::index::sample;
    sample(r, n, k.min(n)).into_vec()
}

/// Prints the one-line verdict of an acceptance criterion and returns it.
pub fn verdict(id: usize, name: &str, pass: bool, detail: &str) -> bool {
    // Written to the raw handle so the line survives libtest's output capture.
    let line = format!("ACCEPTANCE {id} [{}] {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    std::io::Write::write_all(&mut std::io::stdout(), line.as_bytes()).unwrap();
    pass
}
