//! Procedural stereo scenes with analytic disparity.
//!
//! A scene is a textured background plane plus a few fronto-parallel boxes,
//! each layer at a constant disparity. Textures are continuous functions of
//! the left-image coordinate, so the right image is obtained by evaluating
//! each layer's texture at `x_r + d` rather than by resampling pixels.

use rand::Rng;

use super::{corrupt_proxy, CorruptionMode, CorruptionSpec, Rect, StereoSample};
use crate::error::{Error, Result};
use crate::seed::Seeds;
use crate::types::{CameraRig, DisparityMap, DisparityRole, ImageTensor};

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub max_boxes: usize,
    /// Background disparity range at the top row. The background is a plane
    /// tilted towards the camera, like a floor seen from above.
    pub horizon_disparity: (f64, f64),
    /// Background disparity range at the bottom row.
    pub ground_disparity: (f64, f64),
    pub box_disparity: (f64, f64),
    /// Probability that a box is textureless (flat colour).
    pub flat_box_prob: f64,
    /// Probability that a box is "reflective": tinted blue, and a region where
    /// the synthetic stereo proxy fails.
    pub reflective_box_prob: f64,
    /// Texture wavelengths in pixels per pixel of disparity, so nearer
    /// surfaces show coarser texture.
    pub texture_scale: (f64, f64),
    pub rig: CameraRig,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            max_boxes: 3,
            horizon_disparity: (1.5, 2.5),
            ground_disparity: (4.0, 5.0),
            box_disparity: (6.0, 12.0),
            flat_box_prob: 0.0,
            reflective_box_prob: 0.0,
            texture_scale: (2.5, 4.0),
            rig: CameraRig {
                focal_length_px: 100.0,
                baseline_m: 0.5,
            },
        }
    }
}

/// Sum of random plane waves per channel plus a base colour.
#[derive(Debug, Clone)]
pub(crate) struct Texture {
    base: [f64; 3],
    waves: Vec<([f64; 2], f64, [f64; 3])>,
}

impl Texture {
    fn random(rng: &mut impl Rng, base: [f64; 3], wavelength: (f64, f64), flat: bool) -> Self {
        let mut waves = Vec::new();
        if !flat {
            for _ in 0..6 {
                let lambda = rng.random_range(wavelength.0..=wavelength.1);
                let theta = rng.random_range(0.0..std::f64::consts::PI);
                let f = [theta.cos() / lambda, theta.sin() / lambda];
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                let amp = [
                    rng.random_range(0.02..0.07),
                    rng.random_range(0.02..0.07),
                    rng.random_range(0.02..0.07),
                ];
                waves.push((f, phase, amp));
            }
        }
        Self { base, waves }
    }

    fn eval(&self, x: f64, y: f64) -> [f64; 3] {
        let mut c = self.base;
        for (f, phase, amp) in &self.waves {
            let s = (std::f64::consts::TAU * (f[0] * x + f[1] * y) + phase).sin();
            for k in 0..3 {
                c[k] += amp[k] * s;
            }
        }
        c.map(|v| v.clamp(0.0, 1.0))
    }
}

/// One box layer.
#[derive(Debug, Clone)]
pub(crate) struct BoxLayer {
    pub rect: Rect,
    pub disparity: f64,
    pub reflective: bool,
    texture: Texture,
}

/// A sampled scene before rasterisation.
#[derive(Debug, Clone)]
pub struct SceneLayout {
    /// Background disparity at the top and bottom rows.
    background_disparity: (f64, f64),
    height: usize,
    background: Texture,
    /// Sorted far to near.
    boxes: Vec<BoxLayer>,
}

impl SceneLayout {
    /// Rectangles of the reflective boxes, clipped to the image.
    pub fn reflective_regions(&self) -> Vec<Rect> {
        self.boxes.iter().filter(|b| b.reflective).map(|b| b.rect).collect()
    }

    /// Layer index seen at left pixel `x` (0 = background, `i + 1` = box `i`).
    fn left_layer(&self, x: usize, y: usize) -> usize {
        self.boxes
            .iter()
            .enumerate()
            .rev()
            .find(|(_, b)| b.rect.contains(x, y))
            .map_or(0, |(i, _)| i + 1)
    }

    /// Layer visible at right pixel `xr`: the nearest layer whose left-view
    /// footprint contains `xr + d`.
    fn right_layer(&self, xr: usize, y: usize) -> usize {
        for (i, b) in self.boxes.iter().enumerate().rev() {
            let xl = xr as f64 + b.disparity;
            let r = &b.rect;
            if y >= r.y && y < r.y + r.h && xl >= r.x as f64 && xl < (r.x + r.w) as f64 {
                return i + 1;
            }
        }
        0
    }

    fn layer_disparity(&self, layer: usize, y: usize) -> f64 {
        if layer == 0 {
            let (top, bottom) = self.background_disparity;
            let t = if self.height > 1 { y as f64 / (self.height - 1) as f64 } else { 0.0 };
            top + t * (bottom - top)
        } else {
            self.boxes[layer - 1].disparity
        }
    }

    fn layer_colour(&self, layer: usize, x: f64, y: f64) -> [f64; 3] {
        if layer == 0 {
            self.background.eval(x, y)
        } else {
            self.boxes[layer - 1].texture.eval(x, y)
        }
    }
}

/// Samples a scene layout.
pub fn sample_layout(seed: u64, height: usize, width: usize, cfg: &SceneConfig) -> SceneLayout {
    let mut rng = Seeds::new(seed).stream("scene", 0);
    let bg_base = [
        rng.random_range(0.35..0.65),
        rng.random_range(0.35..0.65),
        rng.random_range(0.35..0.65),
    ];
    let top = rng.random_range(cfg.horizon_disparity.0..=cfg.horizon_disparity.1);
    let bottom = rng.random_range(cfg.ground_disparity.0..=cfg.ground_disparity.1);
    let bg_scale = (
        cfg.texture_scale.0 * 0.5 * (top + bottom),
        cfg.texture_scale.1 * 0.5 * (top + bottom),
    );
    let background = Texture::random(&mut rng, bg_base, bg_scale, false);
    let n_boxes = if cfg.max_boxes == 0 { 0 } else { rng.random_range(1..=cfg.max_boxes) };
    let mut boxes = Vec::new();
    for _ in 0..n_boxes {
        let w = rng.random_range(width / 6..=width / 3).max(1);
        let h = rng.random_range(height / 4..=height / 2).max(1);
        let x = rng.random_range(0..=width - w);
        let y = rng.random_range(0..=height - h);
        let disparity = rng.random_range(cfg.box_disparity.0..=cfg.box_disparity.1);
        let reflective = rng.random::<f64>() < cfg.reflective_box_prob;
        let flat = !reflective && rng.random::<f64>() < cfg.flat_box_prob;
        let base = if reflective {
            [
                rng.random_range(0.15..0.25),
                rng.random_range(0.25..0.35),
                rng.random_range(0.7..0.8),
            ]
        } else {
            [
                rng.random_range(0.3..0.75),
                rng.random_range(0.3..0.75),
                rng.random_range(0.2..0.45),
            ]
        };
        let scale = (cfg.texture_scale.0 * disparity, cfg.texture_scale.1 * disparity);
        let texture = Texture::random(&mut rng, base, scale, flat);
        boxes.push(BoxLayer {
            rect: Rect { x, y, w, h },
            disparity,
            reflective,
            texture,
        });
    }
    boxes.sort_by(|a, b| a.disparity.total_cmp(&b.disparity));
    SceneLayout {
        background_disparity: (top, bottom),
        height,
        background,
        boxes,
    }
}

/// Rasterised views of a layout.
pub struct RenderedScene {
    pub left: Vec<f32>,
    pub right: Vec<f32>,
    pub gt: Vec<f32>,
    pub gt_right: Vec<f32>,
    pub occlusion: Vec<bool>,
}

pub fn render(layout: &SceneLayout, height: usize, width: usize) -> RenderedScene {
    let n = height * width;
    let mut left = vec![0f32; 3 * n];
    let mut right = vec![0f32; 3 * n];
    let mut gt = vec![0f32; n];
    let mut gt_right = vec![0f32; n];
    let mut occlusion = vec![false; n];
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            let l = layout.left_layer(x, y);
            let d = layout.layer_disparity(l, y);
            let c = layout.layer_colour(l, x as f64, y as f64);
            for k in 0..3 {
                left[3 * p + k] = c[k] as f32;
            }
            gt[p] = d as f32;
            // Hidden by a nearer layer in the right view.
            let xr = x as f64 - d;
            if xr >= 0.0 {
                let xr0 = xr.floor() as usize;
                let xr1 = (xr0 + 1).min(width - 1);
                let seen = |xx: usize| layout.right_layer(xx, y);
                let frac = xr - xr0 as f64;
                let hidden = seen(xr0) != l || (frac > 0.0 && seen(xr1) != l);
                occlusion[p] = hidden;
            }

            let r = layout.right_layer(x, y);
            let dr = layout.layer_disparity(r, y);
            let c = layout.layer_colour(r, x as f64 + dr, y as f64);
            for k in 0..3 {
                right[3 * p + k] = c[k] as f32;
            }
            gt_right[p] = dr as f32;
        }
    }
    RenderedScene {
        left,
        right,
        gt,
        gt_right,
        occlusion,
    }
}

/// Right-view proxy consistent with a (possibly corrupted) left-view proxy:
/// a right pixel takes the proxy value of the left pixel it matches when that
/// left pixel sees the same surface, and the right-view ground truth
/// otherwise.
pub fn right_view_proxy(proxy: &[f32], gt: &[f32], gt_right: &[f32], width: usize) -> Vec<f32> {
    let mut out = gt_right.to_vec();
    for (p, o) in out.iter_mut().enumerate() {
        let x = p % width;
        let row = p - x;
        let xl = (x as f64 + gt_right[p] as f64).round() as usize;
        if xl < width && gt[row + xl] == gt_right[p] {
            *o = proxy[row + xl];
        }
    }
    out
}

/// Generates a scene with a perfect proxy (`proxy == gt`).
pub fn generate_scene(seed: u64, height: usize, width: usize, cfg: &SceneConfig) -> Result<StereoSample> {
    if height == 0 || width == 0 || height % 16 != 0 || width % 16 != 0 {
        return Err(Error::InvalidValue(format!(
            "scene size {height}x{width} must be a positive multiple of 16"
        )));
    }
    let layout = sample_layout(seed, height, width, cfg);
    let r = render(&layout, height, width);
    let gt = DisparityMap::from_vec(r.gt.clone(), height, width, DisparityRole::GroundTruth)?;
    let gt_right = DisparityMap::from_vec(r.gt_right.clone(), height, width, DisparityRole::GroundTruth)?;
    Ok(StereoSample {
        id: format!("{seed:06}"),
        left: ImageTensor::from_hwc(&r.left, height, width)?,
        right: Some(ImageTensor::from_hwc(&r.right, height, width)?),
        proxy: Some(gt.with_role(DisparityRole::Proxy)),
        proxy_right: Some(gt_right.with_role(DisparityRole::Proxy)),
        gt: Some(gt),
        gt_right: Some(gt_right),
        occlusion: Some(r.occlusion),
        corruption: None,
        rig: cfg.rig,
    })
}

/// Generates a scene whose proxy is corrupted with `mode` on the reflective
/// boxes.
pub fn generate_corrupted_scene(
    seed: u64,
    height: usize,
    width: usize,
    cfg: &SceneConfig,
    mode: CorruptionMode,
) -> Result<StereoSample> {
    let mut s = generate_scene(seed, height, width, cfg)?;
    let spec = CorruptionSpec {
        regions: sample_layout(seed, height, width, cfg).reflective_regions(),
        mode,
        seed,
    };
    let gt = s.gt.as_ref().expect("generated scenes carry gt");
    let proxy = corrupt_proxy(gt, &spec)?;
    let gt_v = gt.to_vec()?;
    let gt_r = s.gt_right.as_ref().expect("generated scenes carry gt").to_vec()?;
    let pr = right_view_proxy(&proxy.to_vec()?, &gt_v, &gt_r, width);
    s.proxy_right = Some(DisparityMap::from_vec(pr, height, width, DisparityRole::Proxy)?);
    s.proxy = Some(proxy);
    s.corruption = Some(spec);
    Ok(s)
}

/// `n` corrupted scenes with ids `000000..`, each drawn from its own seed
/// derived from `seed`.
pub fn synthetic_dataset(
    seed: u64,
    n: usize,
    height: usize,
    width: usize,
    cfg: &SceneConfig,
    mode: CorruptionMode,
) -> Result<Vec<StereoSample>> {
    let seeds = Seeds::new(seed);
    (0..n)
        .map(|i| {
            let mut s = generate_corrupted_scene(seeds.derive("sample", i as u64), height, width, cfg, mode)?;
            s.id = format!("{i:06}");
            Ok(s)
        })
        .collect()
}
