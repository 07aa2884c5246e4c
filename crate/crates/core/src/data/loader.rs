//! Dataset directories.
//!
//! ```text
//! root/calib.txt                      (or root/{split}/calib.txt)
//! root/{split}/left/{id}.png          8-bit RGB
//! root/{split}/right/{id}.png         8-bit RGB
//! root/{split}/proxy/{id}.png         16-bit disparity x256
//! root/{split}/gt/{id}.png            16-bit disparity x256, optional
//! root/{split}/proxy_right/{id}.png   optional, right-view proxy
//! root/{split}/gt_right/{id}.png      optional, right-view ground truth
//! root/{split}/occ/{id}.png           optional, 8-bit occlusion mask
//! root/{split}/meta/{id}.json         optional, corruption metadata
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::io::{
    read_calib, read_disparity_png, read_image_png, read_mask_png, write_calib, write_disparity_png,
    write_image_png, write_mask_png,
};
use super::{CorruptionSpec, StereoSample};
use crate::config::ProxyMode;
use crate::error::{Error, Result};
use crate::types::{DisparityMap, DisparityRole};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidValue(format!("unknown split `{s}`"))),
        }
    }
}

fn list_ids(dir: &Path) -> Result<Vec<String>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "png") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

fn optional_disparity(path: PathBuf, role: DisparityRole) -> Result<Option<DisparityMap>> {
    if path.exists() {
        Ok(Some(read_disparity_png(&path)?.with_role(role)))
    } else {
        Ok(None)
    }
}

fn check_shape(path: &Path, what: (usize, usize), expect: (usize, usize)) -> Result<()> {
    if what != expect {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            msg: format!("size {}x{} differs from left image {}x{}", what.0, what.1, expect.0, expect.1),
        });
    }
    Ok(())
}

fn calib_path(root: &Path, split: Split) -> PathBuf {
    let local = root.join(split.as_str()).join("calib.txt");
    if local.exists() {
        local
    } else {
        root.join("calib.txt")
    }
}

/// Loads every sample of a split, ordered by id. A split without a `left/`
/// directory is empty. In synthetic proxy mode a missing proxy map is
/// replaced by the ground truth when that exists.
pub fn load_dataset(root: &Path, split: Split, proxy_mode: ProxyMode) -> Result<Vec<StereoSample>> {
    let dir = root.join(split.as_str());
    let ids = list_ids(&dir.join("left"))?;
    if ids.is_empty() {
        return Ok(Vec::new());
    }
    let rig = read_calib(&calib_path(root, split))?;
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let file = |sub: &str| dir.join(sub).join(format!("{id}.png"));
        let left = read_image_png(&file("left"))?;
        let hw = (left.height(), left.width());
        let right = read_image_png(&file("right"))?;
        check_shape(&file("right"), (right.height(), right.width()), hw)?;

        let gt = optional_disparity(file("gt"), DisparityRole::GroundTruth)?;
        let gt_right = optional_disparity(file("gt_right"), DisparityRole::GroundTruth)?;
        let proxy = match optional_disparity(file("proxy"), DisparityRole::Proxy)? {
            Some(p) => Some(p),
            None if proxy_mode == ProxyMode::Synthetic && gt.is_some() => {
                gt.as_ref().map(|g| g.with_role(DisparityRole::Proxy))
            }
            None => return Err(Error::MissingFile(file("proxy"))),
        };
        let proxy_right = match optional_disparity(file("proxy_right"), DisparityRole::Proxy)? {
            Some(p) => Some(p),
            None if proxy_mode == ProxyMode::Synthetic => {
                gt_right.as_ref().map(|g| g.with_role(DisparityRole::Proxy))
            }
            None => None,
        };
        for (sub, d) in [("gt", &gt), ("gt_right", &gt_right), ("proxy", &proxy), ("proxy_right", &proxy_right)] {
            if let Some(d) = d {
                check_shape(&file(sub), (d.height(), d.width()), hw)?;
            }
        }
        let occ_path = file("occ");
        let occlusion = if occ_path.exists() {
            let (m, h, w) = read_mask_png(&occ_path)?;
            check_shape(&occ_path, (h, w), hw)?;
            Some(m)
        } else {
            None
        };
        let meta_path = dir.join("meta").join(format!("{id}.json"));
        let corruption = if meta_path.exists() {
            let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
            Some(
                serde_json::from_str::<CorruptionSpec>(&text).map_err(|e| Error::Malformed {
                    path: meta_path.clone(),
                    msg: e.to_string(),
                })?,
            )
        } else {
            None
        };
        out.push(StereoSample {
            id,
            left,
            right: Some(right),
            proxy,
            proxy_right,
            gt,
            gt_right,
            occlusion,
            corruption,
            rig,
        });
    }
    Ok(out)
}

/// Writes samples in the layout read by [`load_dataset`]. All samples must
/// share one camera rig, which goes to `root/{split}/calib.txt`.
pub fn write_dataset(root: &Path, split: Split, samples: &[StereoSample]) -> Result<()> {
    let dir = root.join(split.as_str());
    fs::create_dir_all(dir.join("left")).map_err(|e| Error::io(&dir, e))?;
    let Some(first) = samples.first() else {
        return Ok(());
    };
    if samples.iter().any(|s| s.rig != first.rig) {
        return Err(Error::InvalidValue("samples use different camera rigs".into()));
    }
    write_calib(&dir.join("calib.txt"), &first.rig)?;
    for s in samples {
        let file = |sub: &str| dir.join(sub).join(format!("{}.png", s.id));
        write_image_png(&file("left"), &s.left)?;
        let right = s
            .right
            .as_ref()
            .ok_or_else(|| Error::InvalidValue(format!("sample {} has no right image", s.id)))?;
        write_image_png(&file("right"), right)?;
        for (sub, d) in [
            ("proxy", &s.proxy),
            ("gt", &s.gt),
            ("proxy_right", &s.proxy_right),
            ("gt_right", &s.gt_right),
        ] {
            if let Some(d) = d {
                write_disparity_png(&file(sub), d)?;
            }
        }
        if let Some(occ) = &s.occlusion {
            write_mask_png(&file("occ"), occ, s.height(), s.width())?;
        }
        if let Some(c) = &s.corruption {
            let path = dir.join("meta").join(format!("{}.json", s.id));
            fs::create_dir_all(dir.join("meta")).map_err(|e| Error::io(&dir, e))?;
            let text = serde_json::to_string_pretty(c).expect("corruption spec serializes");
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}
