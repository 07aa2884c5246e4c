//! Stereo samples: synthetic scene generation, proxy corruption, dataset
//! directories and augmentation.

pub mod augment;
pub mod corrupt;
pub mod io;
pub mod loader;
pub mod scene;

use serde::{Deserialize, Serialize};

use crate::types::{CameraRig, DisparityMap, ImageTensor};

pub use augment::{augment, augment_with, AugmentParams};
pub use corrupt::corrupt_proxy;
pub use loader::{load_dataset, write_dataset, Split};
pub use scene::{generate_corrupted_scene, generate_scene, synthetic_dataset, SceneConfig};

/// Axis-aligned pixel rectangle `[x, x + w) x [y, y + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionMode {
    Zero,
    /// 5x5 box blur.
    Blur,
    /// Adds a constant number of pixels.
    Offset(f64),
}

/// Where and how a proxy map is made unreliable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub regions: Vec<Rect>,
    pub mode: CorruptionMode,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn none() -> Self {
        Self {
            regions: Vec::new(),
            mode: CorruptionMode::Zero,
            seed: 0,
        }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.regions.iter().any(|r| r.contains(x, y))
    }

    /// Row-major `(H, W)` indicator of the corrupted pixels.
    pub fn indicator(&self, height: usize, width: usize) -> Vec<bool> {
        (0..height * width)
            .map(|i| self.contains(i % width, i / width))
            .collect()
    }
}

/// One rectified stereo pair with its supervision.
///
/// Disparities without a suffix are expressed in the left view; the
/// `_right` variants are the same quantities in the right view, needed to
/// swap views under horizontal flipping.
#[derive(Debug, Clone)]
pub struct StereoSample {
    pub id: String,
    pub left: ImageTensor,
    pub right: Option<ImageTensor>,
    pub proxy: Option<DisparityMap>,
    pub proxy_right: Option<DisparityMap>,
    pub gt: Option<DisparityMap>,
    pub gt_right: Option<DisparityMap>,
    /// Left-view pixels hidden in the right view by a nearer surface,
    /// row-major `(H, W)`. Diagnostics only; never used for training.
    pub occlusion: Option<Vec<bool>>,
    pub corruption: Option<CorruptionSpec>,
    pub rig: CameraRig,
}

impl StereoSample {
    pub fn height(&self) -> usize {
        self.left.height()
    }

    pub fn width(&self) -> usize {
        self.left.width()
    }
}

/// Read access used by evaluation. Implemented by [`StereoSample`]; the
/// trait exists so tests can observe which parts of a sample are touched.
pub trait SampleView {
    fn id(&self) -> &str;
    fn left(&self) -> &ImageTensor;
    fn right(&self) -> Option<&ImageTensor>;
    fn gt(&self) -> Option<&DisparityMap>;
    fn rig(&self) -> CameraRig;
}

impl SampleView for StereoSample {
    fn id(&self) -> &str {
        &self.id
    }

    fn left(&self) -> &ImageTensor {
        &self.left
    }

    fn right(&self) -> Option<&ImageTensor> {
        self.right.as_ref()
    }

    fn gt(&self) -> Option<&DisparityMap> {
        self.gt.as_ref()
    }

    fn rig(&self) -> CameraRig {
        self.rig
    }
}
