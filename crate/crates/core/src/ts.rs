//! Teacher-student feature distillation losses.
//!
//! All three losses take a teacher and a student [`FeaturePyramid`] with
//! matching level shapes `(B, C_i, H_i, W_i)`. Teacher levels are detached,
//! so gradients only ever reach the student side.

use candle_core::{DType, Tensor};

use crate::error::{Error, Result};
use crate::ops::{resize_bilinear, safe_sqrt};
use crate::types::{FeaturePyramid, LossWeights, Origin};

/// Frozen 1x1 channel projections, one optional `(C_student, C_teacher)`
/// matrix per level.
#[derive(Debug, Clone, Default)]
pub struct ChannelProjection {
    pub per_level: Vec<Option<Tensor>>,
}

/// Bilinearly resizes teacher levels to the student's spatial shapes, and
/// projects channels where the counts differ.
pub fn resize_teacher(
    teacher: &FeaturePyramid,
    student_shapes: &[(usize, usize, usize)],
    projection: Option<&ChannelProjection>,
) -> Result<FeaturePyramid> {
    if teacher.len() != student_shapes.len() {
        return Err(Error::InvalidValue(format!(
            "teacher has {} levels, student has {}",
            teacher.len(),
            student_shapes.len()
        )));
    }
    let mut levels = Vec::with_capacity(teacher.len());
    for (i, (t, &(c, h, w))) in teacher.levels.iter().zip(student_shapes).enumerate() {
        let t = t.detach();
        let tc = t.dim(1)?;
        let t = if tc != c {
            let proj = projection
                .and_then(|p| p.per_level.get(i))
                .and_then(|p| p.as_ref())
                .ok_or_else(|| {
                    Error::InvalidValue(format!(
                        "level {i}: teacher has {tc} channels, student {c}, and no projection"
                    ))
                })?;
            if proj.dims() != [c, tc] {
                return Err(Error::shape("channel projection", proj.dims(), &[c, tc]));
            }
            let (b, _, th, tw) = t.dims4()?;
            let flat = t.reshape((b, tc, th * tw))?;
            proj.to_dtype(t.dtype())?
                .broadcast_matmul(&flat)?
                .reshape((b, c, th, tw))?
        } else {
            t
        };
        levels.push(resize_bilinear(&t, h, w)?);
    }
    Ok(FeaturePyramid::new(levels, Origin::Teacher))
}

fn check_pair(op: &'static str, t: &FeaturePyramid, s: &FeaturePyramid) -> Result<()> {
    if t.len() != s.len() {
        return Err(Error::InvalidValue(format!(
            "{op}: teacher has {} levels, student {}",
            t.len(),
            s.len()
        )));
    }
    for (a, b) in t.levels.iter().zip(&s.levels) {
        if a.dims() != b.dims() {
            return Err(Error::shape(op, a.dims(), b.dims()));
        }
    }
    Ok(())
}

fn teacher_level(t: &Tensor, like: &Tensor) -> Result<Tensor> {
    Ok(t.detach().to_dtype(like.dtype())?)
}

/// `sum_i 0.5^(i-1) * mean |F_T^i - F_S^i|`, the mean taken over every
/// element of the level.
pub fn fd_loss(teacher: &FeaturePyramid, student: &FeaturePyramid) -> Result<Tensor> {
    check_pair("fd_loss", teacher, student)?;
    let mut total: Option<Tensor> = None;
    for (i, (t, s)) in teacher.levels.iter().zip(&student.levels).enumerate() {
        let t = teacher_level(t, s)?;
        let term = (t.sub(s)?.abs()?.mean_all()? * 0.5f64.powi(i as i32))?;
        total = Some(match total {
            Some(acc) => acc.add(&term)?,
            None => term,
        });
    }
    total.ok_or_else(|| Error::InvalidValue("empty pyramid".into()))
}

/// Per-level spatial mean of each channel, `(B, C)` per level.
pub fn channel_weights(p: &FeaturePyramid) -> Result<Vec<Tensor>> {
    p.levels
        .iter()
        .map(|l| Ok(l.mean(3)?.mean(2)?))
        .collect()
}

/// `sum_i mean_c |wt_T^c - wt_S^c|` with `wt^c` the spatial mean of channel
/// `c` at level `i`.
pub fn cd_loss(teacher: &FeaturePyramid, student: &FeaturePyramid) -> Result<Tensor> {
    check_pair("cd_loss", teacher, student)?;
    let mut total: Option<Tensor> = None;
    for (t, s) in teacher.levels.iter().zip(&student.levels) {
        let t = teacher_level(t, s)?;
        let wt = t.mean(3)?.mean(2)?;
        let ws = s.mean(3)?.mean(2)?;
        let term = wt.sub(&ws)?.abs()?.mean_all()?;
        total = Some(match total {
            Some(acc) => acc.add(&term)?,
            None => term,
        });
    }
    total.ok_or_else(|| Error::InvalidValue("empty pyramid".into()))
}

/// Row-normalised Gram matrix `(B, C, C)` of a `(B, C, H, W)` level. All-zero
/// rows stay zero.
pub fn similarity_gram(level: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = level.dims4()?;
    let q = level.reshape((b, c, h * w))?;
    let z = q.matmul(&q.t()?)?;
    let norm = safe_sqrt(&z.sqr()?.sum_keepdim(2)?)?;
    let tiny = match level.dtype() {
        DType::F64 => 1e-300,
        _ => 1e-30,
    };
    Ok(z.broadcast_div(&norm.maximum(tiny)?)?)
}

/// `sum_i ||Z~_T^i - Z~_S^i||_F / C_i^2`, averaged over the batch.
pub fn sd_loss(teacher: &FeaturePyramid, student: &FeaturePyramid) -> Result<Tensor> {
    check_pair("sd_loss", teacher, student)?;
    let mut total: Option<Tensor> = None;
    for (t, s) in teacher.levels.iter().zip(&student.levels) {
        let c = s.dim(1)? as f64;
        let t = teacher_level(t, s)?;
        let diff = similarity_gram(&t)?.sub(&similarity_gram(s)?)?;
        let fro = safe_sqrt(&diff.sqr()?.sum(2)?.sum(1)?)?;
        let term = (fro.mean_all()? / (c * c))?;
        total = Some(match total {
            Some(acc) => acc.add(&term)?,
            None => term,
        });
    }
    total.ok_or_else(|| Error::InvalidValue("empty pyramid".into()))
}

#[derive(Debug, Clone)]
pub struct TsTerms {
    pub fd: Tensor,
    pub cd: Tensor,
    pub sd: Tensor,
    pub total: Tensor,
}

/// `L_FD + lambda_cd * L_CD + lambda_sd * L_SD`.
pub fn ts_loss(teacher: &FeaturePyramid, student: &FeaturePyramid, w: &LossWeights) -> Result<TsTerms> {
    let fd = fd_loss(teacher, student)?;
    let cd = cd_loss(teacher, student)?;
    let sd = sd_loss(teacher, student)?;
    let total = fd
        .add(&(&cd * w.lambda_cd)?)?
        .add(&(&sd * w.lambda_sd)?)?;
    Ok(TsTerms { fd, cd, sd, total })
}
