//! Disparity error metrics and the edge/flat region split.
//!
//! Every metric is computed over pixels valid in both maps, with 64-bit
//! sequential accumulation so results do not depend on thread count.
//! Threshold metrics use strict inequalities.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::imageio::DisparityMap;

pub const CANNY_SIGMA: f64 = 1.4;
pub const CANNY_LOW: f64 = 0.1;
pub const CANNY_HIGH: f64 = 0.3;
/// Side of the square structuring element used to widen edges.
pub const EDGE_DILATION: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum D1Mode {
    /// `|e| > 3` and `|e| > 5%` of the true disparity.
    #[default]
    Kitti,
    /// `|e| > 3` only.
    Absolute,
}

fn check_shapes(pred: &DisparityMap, gt: &DisparityMap) -> Result<()> {
    if pred.disp().shape() != gt.disp().shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.disp().shape(),
            gt.disp().shape()
        )));
    }
    Ok(())
}

/// `(|pred - gt|, gt)` for every pixel valid in both maps and selected by
/// the optional mask.
fn errors<'a>(
    pred: &'a DisparityMap,
    gt: &'a DisparityMap,
    mask: Option<&'a [bool]>,
) -> impl Iterator<Item = (f64, f64)> + 'a {
    (0..pred.values().len()).filter_map(move |i| {
        let keep = pred.valid()[i] && gt.valid()[i] && mask.is_none_or(|m| m[i]);
        keep.then(|| {
            let g = gt.values()[i] as f64;
            ((pred.values()[i] as f64 - g).abs(), g)
        })
    })
}

fn check_mask(pred: &DisparityMap, mask: Option<&[bool]>) -> Result<()> {
    match mask {
        Some(m) if m.len() != pred.values().len() => Err(Error::ShapeMismatch(format!(
            "mask of {} entries for {} pixels",
            m.len(),
            pred.values().len()
        ))),
        _ => Ok(()),
    }
}

/// Mean absolute error (end-point error).
pub fn epe(pred: &DisparityMap, gt: &DisparityMap, mask: Option<&[bool]>) -> Result<f64> {
    check_shapes(pred, gt)?;
    check_mask(pred, mask)?;
    let (sum, n) = errors(pred, gt, mask).fold((0.0, 0usize), |(s, n), (e, _)| (s + e, n + 1));
    if n == 0 {
        return Err(Error::EmptyOverlap);
    }
    Ok(sum / n as f64)
}

fn percent_where(
    pred: &DisparityMap,
    gt: &DisparityMap,
    mask: Option<&[bool]>,
    outlier: impl Fn(f64, f64) -> bool,
) -> Result<f64> {
    check_shapes(pred, gt)?;
    check_mask(pred, mask)?;
    let (bad, n) = errors(pred, gt, mask).fold((0usize, 0usize), |(b, n), (e, g)| {
        (b + outlier(e, g) as usize, n + 1)
    });
    if n == 0 {
        return Err(Error::EmptyOverlap);
    }
    Ok(100.0 * bad as f64 / n as f64)
}

/// Percentage of pixels with error strictly larger than `tau`.
pub fn bad_tau(pred: &DisparityMap, gt: &DisparityMap, tau: f64) -> Result<f64> {
    bad_tau_masked(pred, gt, tau, None)
}

pub fn bad_tau_masked(pred: &DisparityMap, gt: &DisparityMap, tau: f64, mask: Option<&[bool]>) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("threshold must be > 0, got {tau}")));
    }
    percent_where(pred, gt, mask, |e, _| e > tau)
}

/// Disparity outlier rate.
pub fn d1(pred: &DisparityMap, gt: &DisparityMap, mode: D1Mode) -> Result<f64> {
    percent_where(pred, gt, None, |e, g| match mode {
        D1Mode::Kitti => e > 3.0 && e > 0.05 * g.abs(),
        D1Mode::Absolute => e > 3.0,
    })
}

/// Pixels within a dilated ground-truth depth edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeMask {
    width: usize,
    height: usize,
    is_edge: Vec<bool>,
}

impl EdgeMask {
    pub fn new(width: usize, height: usize, is_edge: Vec<bool>) -> Result<Self> {
        if is_edge.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "edge mask of {} entries for {}x{}",
                is_edge.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, is_edge })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_edge(&self) -> &[bool] {
        &self.is_edge
    }

    pub fn flat(&self) -> Vec<bool> {
        self.is_edge.iter().map(|e| !e).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.is_edge.iter().filter(|&&e| e).count()
    }
}

// Fills invalid pixels from the nearest valid one (4-connected BFS seeded
// in raster order).
fn fill_invalid(values: &[f64], valid: &[bool], w: usize, h: usize) -> Vec<f64> {
    let mut out = values.to_vec();
    let mut seen = valid.to_vec();
    let mut queue: VecDeque<usize> = (0..w * h).filter(|&i| valid[i]).collect();
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let mut visit = |j: usize| {
            if !seen[j] {
                seen[j] = true;
                out[j] = out[i];
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < w {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - w);
        }
        if y + 1 < h {
            visit(i + w);
        }
    }
    out
}

fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let k: Vec<f64> = (-(radius as isize)..=radius as isize)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

fn convolve_separable(src: &[f64], w: usize, h: usize, kx: &[f64], ky: &[f64]) -> Vec<f64> {
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let (rx, ry) = ((kx.len() / 2) as isize, (ky.len() / 2) as isize);
    let mut tmp = vec![0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kx
                .iter()
                .enumerate()
                .map(|(k, &c)| c * src[y * w + clamp(x as isize + k as isize - rx, w)])
                .sum();
        }
    }
    let mut out = vec![0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = ky
                .iter()
                .enumerate()
                .map(|(k, &c)| c * tmp[clamp(y as isize + k as isize - ry, h) * w + x])
                .sum();
        }
    }
    out
}

/// Canny edges of a `[0, 255]` image: 5x5 Gaussian smoothing, Sobel
/// gradients, non-maximum suppression over four directions (ties kept)
/// and hysteresis between `low` and `high` fractions of the peak gradient.
pub fn canny(img: &[f64], w: usize, h: usize, sigma: f64, low: f64, high: f64) -> Vec<bool> {
    let smooth = {
        let g = gaussian_kernel(sigma, 2);
        convolve_separable(img, w, h, &g, &g)
    };
    let gx = convolve_separable(&smooth, w, h, &[-1.0, 0.0, 1.0], &[1.0, 2.0, 1.0]);
    let gy = convolve_separable(&smooth, w, h, &[1.0, 2.0, 1.0], &[-1.0, 0.0, 1.0]);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return vec![false; w * h];
    }
    let tie = 1e-9 * peak;
    let at = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut thin = vec![0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if mag[i] <= 0.0 {
                continue;
            }
            let angle = gy[i].atan2(gx[i]).to_degrees().rem_euclid(180.0);
            let (dx, dy) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let (xi, yi) = (x as isize, y as isize);
            let (a, b) = (at(xi + dx, yi + dy), at(xi - dx, yi - dy));
            if mag[i] + tie >= a && mag[i] + tie >= b {
                thin[i] = mag[i];
            }
        }
    }
    let (lo, hi) = (low * peak, high * peak);
    let mut edge = vec![false; w * h];
    let mut stack: Vec<usize> = (0..w * h).filter(|&i| thin[i] >= hi).collect();
    for &i in &stack {
        edge[i] = true;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edge[j] && thin[j] >= lo {
                    edge[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    edge
}

/// Binary dilation with a `size x size` square (size odd).
pub fn dilate_square(mask: &[bool], w: usize, h: usize, size: usize) -> Vec<bool> {
    let r = (size / 2) as isize;
    let mut out = vec![false; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            if !mask[y as usize * w + x as usize] {
                continue;
            }
            for yy in (y - r).max(0)..=(y + r).min(h as isize - 1) {
                for xx in (x - r).max(0)..=(x + r).min(w as isize - 1) {
                    out[yy as usize * w + xx as usize] = true;
                }
            }
        }
    }
    out
}

/// Splits pixels into edge and flat regions from ground-truth depth edges.
///
/// The ground truth is rescaled from its valid range to `[0, 255]`,
/// invalid pixels take the nearest valid value, and Canny edges are
/// dilated by a 5x5 square. A constant ground truth yields an all-flat mask.
pub fn edge_flat_partition(gt: &DisparityMap) -> Result<EdgeMask> {
    let (w, h) = (gt.width(), gt.height());
    let (lo, hi) = gt
        .values()
        .iter()
        .zip(gt.valid())
        .filter(|(_, &ok)| ok)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| {
            (lo.min(v as f64), hi.max(v as f64))
        });
    if lo > hi {
        return Err(Error::DegenerateInput("ground truth has no valid pixel".into()));
    }
    if hi == lo {
        return EdgeMask::new(w, h, vec![false; w * h]);
    }
    let scaled: Vec<f64> = gt
        .values()
        .iter()
        .zip(gt.valid())
        .map(|(&v, &ok)| if ok { (v as f64 - lo) / (hi - lo) * 255.0 } else { 0.0 })
        .collect();
    let filled = fill_invalid(&scaled, gt.valid(), w, h);
    let edges = canny(&filled, w, h, CANNY_SIGMA, CANNY_LOW, CANNY_HIGH);
    EdgeMask::new(w, h, dilate_square(&edges, w, h, EDGE_DILATION))
}

/// Metric bundle for one prediction. Region EPEs are 0 when the region
/// holds no valid pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub epe: f64,
    pub bad_2: f64,
    pub bad_3: f64,
    pub d1_all: f64,
    pub d1_abs: f64,
    pub epe_edge: f64,
    pub epe_flat: f64,
    pub n_valid: usize,
    pub n_edge: usize,
    pub n_flat: usize,
    pub time_ms: Option<f64>,
}

pub const REPORT_CSV_HEADER: &str =
    "epe,bad_2,bad_3,d1_all,d1_abs,epe_edge,epe_flat,n_valid,n_edge,n_flat,time_ms";

const REPORT_KEYS: [&str; 11] = [
    "epe", "bad_2", "bad_3", "d1_all", "d1_abs", "epe_edge", "epe_flat", "n_valid", "n_edge", "n_flat", "time_ms",
];

impl EvalReport {
    /// `(n_edge * epe_edge + n_flat * epe_flat) / n_valid`.
    pub fn weighted_epe(&self) -> f64 {
        (self.n_edge as f64 * self.epe_edge + self.n_flat as f64 * self.epe_flat) / self.n_valid as f64
    }

    fn fields(&self) -> [String; 11] {
        [
            format!("{}", self.epe),
            format!("{}", self.bad_2),
            format!("{}", self.bad_3),
            format!("{}", self.d1_all),
            format!("{}", self.d1_abs),
            format!("{}", self.epe_edge),
            format!("{}", self.epe_flat),
            self.n_valid.to_string(),
            self.n_edge.to_string(),
            self.n_flat.to_string(),
            self.time_ms.map_or_else(String::new, |t| format!("{t}")),
        ]
    }

    /// `key = value` lines; `time_ms` is omitted when unknown.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in REPORT_KEYS.iter().zip(self.fields()) {
            if !v.is_empty() {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }

    pub fn to_csv_row(&self) -> String {
        self.fields().join(",")
    }

    pub fn from_key_value(text: &str) -> Result<Self> {
        let mut vals: [Option<f64>; 11] = [None; 11];
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad report line {line:?}")))?;
            let slot = REPORT_KEYS
                .iter()
                .position(|&key| key == k.trim())
                .ok_or_else(|| Error::Format(format!("unknown report key {:?}", k.trim())))?;
            vals[slot] = Some(
                v.trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad report value {line:?}")))?,
            );
        }
        let get = |i: usize| vals[i].ok_or_else(|| Error::Format(format!("missing report key {}", REPORT_KEYS[i])));
        Ok(Self {
            epe: get(0)?,
            bad_2: get(1)?,
            bad_3: get(2)?,
            d1_all: get(3)?,
            d1_abs: get(4)?,
            epe_edge: get(5)?,
            epe_flat: get(6)?,
            n_valid: get(7)? as usize,
            n_edge: get(8)? as usize,
            n_flat: get(9)? as usize,
            time_ms: vals[10],
        })
    }
}

fn region_epe(pred: &DisparityMap, gt: &DisparityMap, mask: &[bool]) -> (f64, usize) {
    let (sum, n) = errors(pred, gt, Some(mask)).fold((0.0, 0usize), |(s, n), (e, _)| (s + e, n + 1));
    if n == 0 {
        (0.0, 0)
    } else {
        (sum / n as f64, n)
    }
}

/// Full report with the edge mask derived from `gt`.
pub fn eval_report(pred: &DisparityMap, gt: &DisparityMap) -> Result<EvalReport> {
    check_shapes(pred, gt)?;
    let mask = edge_flat_partition(gt)?;
    eval_report_with_mask(pred, gt, &mask)
}

pub fn eval_report_with_mask(pred: &DisparityMap, gt: &DisparityMap, mask: &EdgeMask) -> Result<EvalReport> {
    check_shapes(pred, gt)?;
    check_mask(pred, Some(mask.is_edge()))?;
    let (epe_edge, n_edge) = region_epe(pred, gt, mask.is_edge());
    let (epe_flat, n_flat) = region_epe(pred, gt, &mask.flat());
    Ok(EvalReport {
        epe: epe(pred, gt, None)?,
        bad_2: bad_tau(pred, gt, 2.0)?,
        bad_3: bad_tau(pred, gt, 3.0)?,
        d1_all: d1(pred, gt, D1Mode::Kitti)?,
        d1_abs: d1(pred, gt, D1Mode::Absolute)?,
        epe_edge,
        epe_flat,
        n_valid: n_edge + n_flat,
        n_edge,
        n_flat,
        time_ms: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::DenseArray;
    use approx::assert_abs_diff_eq;

    fn map(w: usize, h: usize, v: Vec<f32>) -> DisparityMap {
        DisparityMap::from_raw(w, h, v).unwrap()
    }

    #[test]
    fn epe_cases() {
        let gt = map(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(epe(&gt, &gt, None).unwrap(), 0.0);
        let pred = map(2, 2, vec![2.0, 3.0, 4.0, 9.0]);
        assert_eq!(epe(&pred, &gt, None).unwrap(), 2.0);
        assert_eq!(epe(&pred, &gt, Some(&[false, false, false, true])).unwrap(), 5.0);
        assert!(matches!(epe(&pred, &gt, Some(&[false; 4])), Err(Error::EmptyOverlap)));
    }

    #[test]
    fn epe_sparse_valid() {
        let inf = f32::INFINITY;
        let gt = map(3, 3, vec![1.0, inf, 2.0, inf, 5.0, inf, 0.0, inf, inf]);
        let pred = map(3, 3, vec![1.5, 9.0, 0.0, 9.0, 5.25, 9.0, 4.0, 9.0, 9.0]);
        let expected = (0.5 + 2.0 + 0.25 + 4.0) / 4.0;
        assert_eq!(epe(&pred, &gt, None).unwrap(), expected);
    }

    #[test]
    fn bad_tau_cases() {
        let gt = map(2, 1, vec![0.0, 0.0]);
        assert_eq!(bad_tau(&gt, &gt, 2.0).unwrap(), 0.0);
        assert_eq!(bad_tau(&map(2, 1, vec![1.0, 3.0]), &gt, 2.0).unwrap(), 50.0);
        // an error equal to the threshold is not counted
        assert_eq!(bad_tau(&map(2, 1, vec![2.0, 2.5]), &gt, 2.0).unwrap(), 50.0);
        assert_eq!(bad_tau(&map(2, 1, vec![2.0, 2.0]), &gt, 2.0).unwrap(), 0.0);
        assert!(bad_tau(&gt, &gt, 0.0).is_err());
    }

    #[test]
    fn d1_cases() {
        let gt = map(2, 1, vec![10.0, 100.0]);
        let pred = map(2, 1, vec![14.0, 104.0]);
        assert_eq!(d1(&pred, &gt, D1Mode::Kitti).unwrap(), 50.0);
        assert_eq!(d1(&pred, &gt, D1Mode::Absolute).unwrap(), 100.0);
        assert_eq!(d1(&gt, &gt, D1Mode::Kitti).unwrap(), 0.0);
    }

    #[test]
    fn constant_gt_is_flat() {
        let gt = map(8, 8, vec![3.0; 64]);
        assert_eq!(edge_flat_partition(&gt).unwrap().edge_count(), 0);
        let none = map(2, 2, vec![f32::INFINITY; 4]);
        assert!(matches!(edge_flat_partition(&none), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn step_edge_band() {
        let (w, h, k) = (16, 16, 8);
        let gt = map(w, h, (0..w * h).map(|i| if i % w < k { 10.0 } else { 30.0 }).collect());
        let mask = edge_flat_partition(&gt).unwrap();
        for y in 0..h {
            let row: Vec<usize> = (0..w).filter(|&x| mask.is_edge()[y * w + x]).collect();
            // columns k-1 and k tie under suppression, then widen by 2 each way
            assert_eq!(row, (k - 3..k + 3).collect::<Vec<_>>());
        }
    }

    #[test]
    fn invalid_pixels_do_not_create_edges() {
        let (w, h) = (12, 12);
        let v: Vec<f32> = (0..w * h)
            .map(|i| if (i % w) % 3 == 0 { f32::INFINITY } else if i % w < 6 { 4.0 } else { 8.0 })
            .collect();
        let mask = edge_flat_partition(&map(w, h, v)).unwrap();
        // only the depth step between columns 5 and 6 may be marked
        for y in 0..h {
            for x in 0..w {
                if mask.is_edge()[y * w + x] {
                    assert!((2..=9).contains(&x), "edge at {x},{y}");
                }
            }
        }
        assert!(mask.edge_count() > 0);
    }

    #[test]
    fn report_identity_and_serialization() {
        let (w, h) = (16, 12);
        let gt = map(w, h, (0..w * h).map(|i| if i % w < 7 { 5.0 } else { 20.0 }).collect());
        let pred_v: Vec<f32> = gt.values().iter().enumerate().map(|(i, v)| v + ((i * 7) % 5) as f32 * 0.9).collect();
        let pred = DisparityMap::all_valid(DenseArray::from_vec(&[h, w], pred_v).unwrap()).unwrap();
        let r = eval_report(&pred, &gt).unwrap();
        assert_eq!(r.n_valid, w * h);
        assert!(r.n_edge > 0 && r.n_flat > 0);
        assert_abs_diff_eq!(r.epe, r.weighted_epe(), epsilon = 1e-9);
        assert!(r.bad_2 >= r.bad_3);

        let same = eval_report(&gt, &gt).unwrap();
        assert_eq!((same.epe, same.bad_2, same.d1_all, same.epe_edge, same.epe_flat), (0.0, 0.0, 0.0, 0.0, 0.0));

        let text = r.to_key_value();
        assert!(!text.contains("time_ms"));
        assert_eq!(EvalReport::from_key_value(&text).unwrap(), r);
        let timed = EvalReport { time_ms: Some(12.5), ..r.clone() };
        assert_eq!(EvalReport::from_key_value(&timed.to_key_value()).unwrap(), timed);
        assert_eq!(r.to_csv_row().split(',').count(), REPORT_CSV_HEADER.split(',').count());
        assert!(EvalReport::from_key_value("epe = 1\nbogus = 2").is_err());
    }
}
