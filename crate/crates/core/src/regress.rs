//! Soft-argmin disparity regression and the smooth L1 loss.

use rayon::prelude::*;

use crate::array::DenseArray;
use crate::error::{Error, Result};
use crate::features::{CostVolume, Polarity};
use crate::imageio::DisparityMap;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SoftArgminConfig {
    /// Softmax temperature; logits are `value / temperature`, negated for
    /// cost volumes.
    pub temperature: f32,
}

impl Default for SoftArgminConfig {
    fn default() -> Self {
        Self { temperature: 1.0 }
    }
}

impl SoftArgminConfig {
    pub fn new(temperature: f32) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::Config(format!("temperature must be > 0, got {temperature}")));
        }
        Ok(Self { temperature })
    }

    fn sign(polarity: Polarity) -> f64 {
        match polarity {
            Polarity::Similarity => 1.0,
            Polarity::Cost => -1.0,
        }
    }
}

/// Max-subtracted softmax of one disparity column, written into `out`.
/// Returns the expected disparity.
fn column_softmax(col: &[f32], scale: f64, out: &mut [f64]) -> f64 {
    let max = col
        .iter()
        .map(|&v| v as f64 * scale)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (p, &v) in out.iter_mut().zip(col) {
        *p = (v as f64 * scale - max).exp();
        z += *p;
    }
    let mut mean = 0.0;
    for (d, p) in out.iter_mut().enumerate() {
        *p /= z;
        mean += d as f64 * *p;
    }
    mean
}

/// Expected disparity index under the softmax of each column; every
/// output pixel is valid and lies in `[0, D - 1]`.
pub fn soft_argmin(ch: &CostVolume, cfg: &SoftArgminConfig) -> Result<DisparityMap> {
    SoftArgminConfig::new(cfg.temperature)?;
    let nd = ch.levels();
    let scale = SoftArgminConfig::sign(ch.polarity()) / cfg.temperature as f64;
    let mut pred = vec![0f32; ch.width() * ch.height()];
    pred.par_chunks_mut(ch.width())
        .zip(ch.values().par_chunks(ch.width() * nd))
        .for_each(|(row, src)| {
            let mut p = vec![0f64; nd];
            for (o, col) in row.iter_mut().zip(src.chunks_exact(nd)) {
                *o = column_softmax(col, scale, &mut p) as f32;
            }
        });
    DisparityMap::all_valid(DenseArray::from_vec(&[ch.height(), ch.width()], pred)?)
}

/// Gradient of a scalar objective with respect to the volume, given the
/// objective's gradient `upstream` (`[H, W]`) with respect to the
/// soft-argmin output: `dC = upstream * (sign / tau) * p(d) * (d - E[d])`.
pub fn soft_argmin_backward(ch: &CostVolume, cfg: &SoftArgminConfig, upstream: &DenseArray) -> Result<DenseArray> {
    SoftArgminConfig::new(cfg.temperature)?;
    if upstream.shape() != [ch.height(), ch.width()] {
        return Err(Error::ShapeMismatch(format!(
            "upstream {:?} vs volume [{}, {}]",
            upstream.shape(),
            ch.height(),
            ch.width()
        )));
    }
    let nd = ch.levels();
    let sign = SoftArgminConfig::sign(ch.polarity());
    let scale = sign / cfg.temperature as f64;
    let mut grad = vec![0f32; ch.values().len()];
    grad.par_chunks_mut(nd)
        .zip(ch.values().par_chunks(nd))
        .zip(upstream.data().par_iter())
        .for_each(|((out, col), &u)| {
            let mut p = vec![0f64; nd];
            let mean = column_softmax(col, scale, &mut p);
            for (d, (o, &pd)) in out.iter_mut().zip(&p).enumerate() {
                *o = (u as f64 * scale * pd * (d as f64 - mean)) as f32;
            }
        });
    DenseArray::from_vec(ch.array().shape(), grad)
}

/// `0.5 x^2` for `|x| < 1`, `|x| - 0.5` otherwise.
#[inline]
pub fn smooth_l1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

#[inline]
fn smooth_l1_slope(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

fn check_pair(pred: &DisparityMap, gt: &DisparityMap) -> Result<usize> {
    if pred.disp().shape() != gt.disp().shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.disp().shape(),
            gt.disp().shape()
        )));
    }
    let n = pred
        .valid()
        .iter()
        .zip(gt.valid())
        .filter(|(&a, &b)| a && b)
        .count();
    if n == 0 {
        return Err(Error::EmptyOverlap);
    }
    Ok(n)
}

/// Mean smooth L1 loss over pixels valid in both maps.
pub fn smooth_l1_loss(pred: &DisparityMap, gt: &DisparityMap) -> Result<f64> {
    smooth_l1_loss_with(pred, gt, Reduction::Mean)
}

pub fn smooth_l1_loss_with(pred: &DisparityMap, gt: &DisparityMap, reduction: Reduction) -> Result<f64> {
    let n = check_pair(pred, gt)?;
    let total: f64 = pred
        .values()
        .iter()
        .zip(gt.values())
        .zip(pred.valid().iter().zip(gt.valid()))
        .filter(|(_, (&a, &b))| a && b)
        .map(|((&p, &g), _)| smooth_l1(p as f64 - g as f64))
        .sum();
    Ok(match reduction {
        Reduction::Mean => total / n as f64,
        Reduction::Sum => total,
    })
}

/// Gradient of the loss with respect to the prediction (`[H, W]`, zero on
/// pixels excluded from the loss).
pub fn smooth_l1_backward(pred: &DisparityMap, gt: &DisparityMap, reduction: Reduction) -> Result<DenseArray> {
    let n = check_pair(pred, gt)?;
    let norm = match reduction {
        Reduction::Mean => n as f64,
        Reduction::Sum => 1.0,
    };
    let grad = pred
        .values()
        .iter()
        .zip(gt.values())
        .zip(pred.valid().iter().zip(gt.valid()))
        .map(|((&p, &g), (&a, &b))| {
            if a && b {
                (smooth_l1_slope(p as f64 - g as f64) / norm) as f32
            } else {
                0.0
            }
        })
        .collect();
    DenseArray::from_vec(pred.disp().shape(), grad)
}
