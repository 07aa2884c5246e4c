//! Frozen proxy teachers. A teacher supplies the proxy disparity for a sample
//! and multi-scale stereo features for feature distillation. Nothing here is
//! ever trained.

use std::path::PathBuf;

use candle_core::{DType, Tensor};
use sha2::{Digest, Sha256};

use super::params::ParamStore;
use crate::data::{io::read_disparity_png, StereoSample};
use crate::error::{Error, Result};
use crate::seed::Seeds;
use crate::ts::{resize_teacher, ChannelProjection};
use crate::types::{DisparityMap, DisparityRole, FeaturePyramid, Origin};

pub trait ProxyTeacher {
    fn proxy_disparity(&self, sample: &StereoSample) -> Result<DisparityMap>;

    /// Teacher features of a `(B, 3, H, W)` stereo batch, aligned to the
    /// student shapes.
    fn teacher_features(&self, left: &Tensor, right: &Tensor) -> Result<FeaturePyramid>;

    fn features_of(&self, sample: &StereoSample) -> Result<FeaturePyramid> {
        let right = sample
            .right
            .as_ref()
            .ok_or_else(|| Error::InvalidValue(format!("sample {} has no right image", sample.id)))?;
        self.teacher_features(&sample.left.tensor().unsqueeze(0)?, &right.tensor().unsqueeze(0)?)
    }

    /// Digest of all frozen weights; must never change.
    fn parameter_hash(&self) -> Result<String>;
}

/// A small randomly initialised convolutional stereo encoder that is never
/// trained. Its native levels sit at half the student resolution with the
/// channel counts given at construction; they are projected (when channel
/// counts differ) and resized to the student shapes.
#[derive(Debug, Clone)]
pub struct SyntheticTeacher {
    stem: (Tensor, Tensor),
    levels: Vec<(Tensor, Tensor)>,
    projection: ChannelProjection,
    student_shapes: Vec<(usize, usize, usize)>,
}

fn frozen_conv(seeds: &Seeds, tag: &str, c_in: usize, c_out: usize) -> Result<(Tensor, Tensor)> {
    let bound = (6.0 / (c_in * 9) as f64).sqrt();
    let w = ParamStore::frozen_uniform(seeds, &format!("{tag}.weight"), &[c_out, c_in, 3, 3], bound, DType::F32)?;
    let b = ParamStore::frozen_uniform(seeds, &format!("{tag}.bias"), &[c_out], 0.05, DType::F32)?;
    Ok((w, b))
}

fn apply(conv: &(Tensor, Tensor), x: &Tensor) -> Result<Tensor> {
    let y = x.conv2d(&conv.0, 1, 2, 1, 1)?;
    let c = conv.1.dim(0)?;
    Ok(y.broadcast_add(&conv.1.reshape((1, c, 1, 1))?)?.relu()?)
}

impl SyntheticTeacher {
    /// `teacher_channels` gives the native channel count of each of the
    /// student levels.
    pub fn new(seeds: &Seeds, student_shapes: &[(usize, usize, usize)], teacher_channels: &[usize]) -> Result<Self> {
        if student_shapes.len() != teacher_channels.len() {
            return Err(Error::InvalidValue("teacher/student level count mismatch".into()));
        }
        let stem_c = teacher_channels.first().copied().unwrap_or(8) / 2;
        let stem = frozen_conv(seeds, "teacher.stem", 6, stem_c.max(1))?;
        let mut levels = Vec::new();
        let mut prev = stem_c.max(1);
        let mut per_level = Vec::new();
        for (i, (&tc, &(sc, _, _))) in teacher_channels.iter().zip(student_shapes).enumerate() {
            levels.push(frozen_conv(seeds, &format!("teacher.l{i}"), prev, tc)?);
            prev = tc;
            per_level.push(if tc != sc {
                let bound = (3.0 / tc as f64).sqrt();
                Some(ParamStore::frozen_uniform(
                    seeds,
                    &format!("teacher.proj{i}"),
                    &[sc, tc],
                    bound,
                    DType::F32,
                )?)
            } else {
                None
            });
        }
        Ok(Self {
            stem,
            levels,
            projection: ChannelProjection { per_level },
            student_shapes: student_shapes.to_vec(),
        })
    }

    /// Teacher with the same channel counts as the student.
    pub fn matching(seeds: &Seeds, student_shapes: &[(usize, usize, usize)]) -> Result<Self> {
        let channels: Vec<usize> = student_shapes.iter().map(|s| s.0).collect();
        Self::new(seeds, student_shapes, &channels)
    }

    /// Native (unaligned) features.
    pub fn native_features(&self, left: &Tensor, right: &Tensor) -> Result<FeaturePyramid> {
        let x = Tensor::cat(&[left.to_dtype(DType::F32)?, right.to_dtype(DType::F32)?], 1)?.detach();
        // stem at 1/2, then one stride-2 conv per level: 1/4, 1/8, ...
        let mut x = apply(&self.stem, &x)?;
        let mut out = Vec::new();
        for conv in &self.levels {
            x = apply(conv, &x)?;
            out.push(x.clone());
        }
        Ok(FeaturePyramid::new(out, Origin::Teacher))
    }
}

impl SyntheticTeacher {
    pub fn aligned_features(&self, left: &Tensor, right: &Tensor) -> Result<FeaturePyramid> {
        let native = self.native_features(left, right)?;
        resize_teacher(&native, &self.student_shapes, Some(&self.projection))
    }

    pub fn hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        let mut feed = |t: &Tensor| -> Result<()> {
            for v in t.flatten_all()?.to_vec1::<f32>()? {
                h.update(v.to_le_bytes());
            }
            Ok(())
        };
        feed(&self.stem.0)?;
        feed(&self.stem.1)?;
        for (w, b) in &self.levels {
            feed(w)?;
            feed(b)?;
        }
        for p in self.projection.per_level.iter().flatten() {
            feed(p)?;
        }
        Ok(format!("{:x}", h.finalize()))
    }
}

/// Uses the proxy disparity stored with each sample.
#[derive(Debug, Clone)]
pub struct SampleProxy {
    pub teacher: SyntheticTeacher,
}

impl ProxyTeacher for SampleProxy {
    fn proxy_disparity(&self, sample: &StereoSample) -> Result<DisparityMap> {
        sample
            .proxy
            .clone()
            .ok_or_else(|| Error::InvalidValue(format!("sample {} has no proxy disparity", sample.id)))
    }

    fn teacher_features(&self, left: &Tensor, right: &Tensor) -> Result<FeaturePyramid> {
        self.teacher.aligned_features(left, right)
    }

    fn parameter_hash(&self) -> Result<String> {
        self.teacher.hash()
    }
}

/// Reads precomputed proxy disparities from `root/{id}.png` (16-bit,
/// value / 256 = pixels). Features come from a [`SyntheticTeacher`].
#[derive(Debug, Clone)]
pub struct FileProxy {
    pub root: PathBuf,
    pub teacher: SyntheticTeacher,
}

pub fn file_proxy(root: impl Into<PathBuf>, teacher: SyntheticTeacher) -> FileProxy {
    FileProxy {
        root: root.into(),
        teacher,
    }
}

impl ProxyTeacher for FileProxy {
    fn proxy_disparity(&self, sample: &StereoSample) -> Result<DisparityMap> {
        let path = self.root.join(format!("{}.png", sample.id));
        if !path.exists() {
            return Err(Error::MissingFile(path));
        }
        let d = read_disparity_png(&path)?;
        DisparityMap::new(d.tensor().clone(), DisparityRole::Proxy)
    }

    fn teacher_features(&self, left: &Tensor, right: &Tensor) -> Result<FeaturePyramid> {
        self.teacher.aligned_features(left, right)
    }

    fn parameter_hash(&self) -> Result<String> {
        self.teacher.hash()
    }
}
