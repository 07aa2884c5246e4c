//! PNG and calibration file formats.
//!
//! Images are 8-bit RGB. Disparities are 16-bit grayscale with
//! `value / 256 = pixels` (0 marks an invalid pixel). Masks are 8-bit
//! grayscale, 0 or 255.

use std::fs;
use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::types::{CameraRig, DisparityMap, DisparityRole, ImageTensor};

fn malformed(path: &Path, msg: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    image::open(path).map_err(|e| malformed(path, e.to_string()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn save<P, C>(path: &Path, buf: &ImageBuffer<P, C>) -> Result<()>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    ensure_parent(path)?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| malformed(path, e.to_string()))
}

pub fn read_image_png(path: &Path) -> Result<ImageTensor> {
    let img = open(path)?.to_rgb32f();
    let (w, h) = img.dimensions();
    ImageTensor::from_hwc(img.as_raw(), h as usize, w as usize)
}

pub fn write_image_png(path: &Path, image: &ImageTensor) -> Result<()> {
    let (h, w) = (image.height(), image.width());
    let data: Vec<u8> = image
        .to_hwc()?
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf = ImageBuffer::<Rgb<u8>, _>::from_raw(w as u32, h as u32, data)
        .ok_or_else(|| malformed(path, "buffer size"))?;
    save(path, &buf)
}

pub fn read_disparity_png(path: &Path) -> Result<DisparityMap> {
    let img = open(path)?;
    let img = match img {
        image::DynamicImage::ImageLuma16(b) => b,
        other => {
            return Err(malformed(
                path,
                format!("expected 16-bit grayscale, got {:?}", other.color()),
            ))
        }
    };
    let (w, h) = img.dimensions();
    let v = img.as_raw().iter().map(|&x| x as f32 / 256.0).collect();
    DisparityMap::from_vec(v, h as usize, w as usize, DisparityRole::Proxy)
        .map_err(|e| malformed(path, e.to_string()))
}

/// Values are rounded to the nearest 1/256 px and saturate at 65535/256.
pub fn write_disparity_png(path: &Path, d: &DisparityMap) -> Result<()> {
    let data: Vec<u16> = d
        .to_vec()?
        .iter()
        .map(|v| (v * 256.0).round().clamp(0.0, 65535.0) as u16)
        .collect();
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(d.width() as u32, d.height() as u32, data)
        .ok_or_else(|| malformed(path, "buffer size"))?;
    save(path, &buf)
}

pub fn read_mask_png(path: &Path) -> Result<(Vec<bool>, usize, usize)> {
    let img = open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    Ok((img.as_raw().iter().map(|&v| v >= 128).collect(), h as usize, w as usize))
}

pub fn write_mask_png(path: &Path, mask: &[bool], height: usize, width: usize) -> Result<()> {
    let data: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    let buf = ImageBuffer::<Luma<u8>, _>::from_raw(width as u32, height as u32, data)
        .ok_or_else(|| malformed(path, "buffer size"))?;
    save(path, &buf)
}

/// Parses `focal_px=<f>` and `baseline_m=<b>` lines; `#` starts a comment.
pub fn read_calib(path: &Path) -> Result<CameraRig> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut focal = None;
    let mut baseline = None;
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| malformed(path, format!("expected key=value, got `{line}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| malformed(path, format!("bad number for `{}`", k.trim())))?;
        match k.trim() {
            "focal_px" => focal = Some(v),
            "baseline_m" => baseline = Some(v),
            other => return Err(malformed(path, format!("unknown key `{other}`"))),
        }
    }
    let focal = focal.ok_or_else(|| malformed(path, "missing focal_px"))?;
    let baseline = baseline.ok_or_else(|| malformed(path, "missing baseline_m"))?;
    CameraRig::new(focal, baseline).map_err(|e| malformed(path, e.to_string()))
}

pub fn write_calib(path: &Path, rig: &CameraRig) -> Result<()> {
    ensure_parent(path)?;
    let text = format!("focal_px={}\nbaseline_m={}\n", rig.focal_length_px, rig.baseline_m);
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
