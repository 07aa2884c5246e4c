use super::{CorruptionMode, CorruptionSpec};
use crate::error::{Error, Result};
use crate::types::{DisparityMap, DisparityRole};

const BLUR_RADIUS: usize = 2;

/// Makes the proxy unreliable inside `spec.regions`; outside them the output
/// equals `gt` bit for bit.
pub fn corrupt_proxy(gt: &DisparityMap, spec: &CorruptionSpec) -> Result<DisparityMap> {
    let (h, w) = (gt.height(), gt.width());
    for r in &spec.regions {
        if r.w == 0 || r.h == 0 || r.x + r.w > w || r.y + r.h > h {
            return Err(Error::InvalidValue(format!(
                "corruption region {r:?} outside {h}x{w} image"
            )));
        }
    }
    let src = gt.to_vec()?;
    let mut out = src.clone();
    for y in 0..h {
        for x in 0..w {
            if !spec.contains(x, y) {
                continue;
            }
            let p = y * w + x;
            out[p] = match spec.mode {
                CorruptionMode::Zero => 0.0,
                CorruptionMode::Offset(delta) => (src[p] as f64 + delta).clamp(0.0, w as f64) as f32,
                CorruptionMode::Blur => {
                    // window truncated at the image border
                    let (y0, y1) = (y.saturating_sub(BLUR_RADIUS), (y + BLUR_RADIUS).min(h - 1));
                    let (x0, x1) = (x.saturating_sub(BLUR_RADIUS), (x + BLUR_RADIUS).min(w - 1));
                    let mut sum = 0.0f64;
                    for yy in y0..=y1 {
                        for xx in x0..=x1 {
                            sum += src[yy * w + xx] as f64;
                        }
                    }
                    (sum / ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64) as f32
                }
            };
        }
    }
    DisparityMap::from_vec(out, h, w, DisparityRole::Proxy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Rect;

    fn ramp() -> DisparityMap {
        let v = (0..8 * 16).map(|i| (i % 16) as f32 * 0.5).collect();
        DisparityMap::from_vec(v, 8, 16, DisparityRole::GroundTruth).unwrap()
    }

    #[test]
    fn empty_regions_is_identity() {
        let gt = ramp();
        let p = corrupt_proxy(&gt, &CorruptionSpec::none()).unwrap();
        assert_eq!(p.to_vec().unwrap(), gt.to_vec().unwrap());
    }

    #[test]
    fn offset_region() {
        let gt = ramp();
        let spec = CorruptionSpec {
            regions: vec![Rect { x: 2, y: 1, w: 4, h: 3 }],
            mode: CorruptionMode::Offset(4.0),
            seed: 0,
        };
        let p = corrupt_proxy(&gt, &spec).unwrap().to_vec().unwrap();
        let g = gt.to_vec().unwrap();
        for i in 0..p.len() {
            let expect = if spec.contains(i % 16, i / 16) { 4.0 } else { 0.0 };
            assert_eq!(p[i] - g[i], expect);
        }
    }

    #[test]
    fn out_of_bounds_region() {
        let spec = CorruptionSpec {
            regions: vec![Rect { x: 14, y: 0, w: 4, h: 2 }],
            mode: CorruptionMode::Zero,
            seed: 0,
        };
        assert!(corrupt_proxy(&ramp(), &spec).is_err());
    }
}
