//! Independent reference implementations and helpers shared by the
//! integration tests. Everything here works in f64 and avoids the crate's
//! own interpolation helpers.

#![allow(dead_code)]

use std::path::PathBuf;

use cubg::features::{CostVolume, GuidanceMap, Polarity};
use cubg::grid::{BilateralGrid, SliceParams};
use cubg::DenseArray;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn random_array(rng: &mut ChaCha8Rng, shape: &[usize], lo: f32, hi: f32) -> DenseArray {
    let n = shape.iter().product();
    DenseArray::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

pub fn random_grid(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> BilateralGrid {
    BilateralGrid::new(random_array(rng, &shape, -1.0, 1.0), Polarity::Cost).unwrap()
}

pub fn random_guidance(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GuidanceMap {
    GuidanceMap::new(random_array(rng, &[h, w], 0.0, 1.0)).unwrap()
}

/// Guidance whose bin coordinate `g * (levels - 1)` stays at least `margin`
/// away from every integer, so small perturbations never cross a knot.
pub fn guidance_off_knots(rng: &mut ChaCha8Rng, w: usize, h: usize, levels: usize, margin: f64) -> GuidanceMap {
    let top = (levels - 1) as f64;
    let v = (0..w * h)
        .map(|_| {
            let cell = rng.gen_range(0..levels - 1) as f64;
            ((cell + rng.gen_range(margin..1.0 - margin)) / top) as f32
        })
        .collect();
    GuidanceMap::new(DenseArray::from_vec(&[h, w], v).unwrap()).unwrap()
}

/// Per-axis (low index, high index, fraction) by the align-corners rule,
/// clamped to the axis.
fn axis(coord: f64, extent: usize) -> (usize, usize, f64) {
    if extent == 1 {
        return (0, 0, 0.0);
    }
    let c = coord.max(0.0).min((extent - 1) as f64);
    let lo = (c.floor() as usize).min(extent - 2);
    (lo, lo + 1, c - lo as f64)
}

fn ratio(grid: usize, out: usize) -> f64 {
    let denom = if out > 1 { out - 1 } else { 1 };
    (grid - 1) as f64 / denom as f64
}

/// Brute-force quadrilinear slice: every output element visits all 16
/// corners explicitly. Output is `[out_h, out_w, out_d]`, row-major.
pub fn oracle_slice(grid: &BilateralGrid, guide: &GuidanceMap, p: &SliceParams) -> Vec<f64> {
    let (gx, gy, gd, gg) = (grid.width(), grid.height(), grid.levels(), grid.guidance_levels());
    let mut out = Vec::with_capacity(p.out_w * p.out_h * p.out_d);
    for y in 0..p.out_h {
        for x in 0..p.out_w {
            let g = guide.values()[y * p.out_w + x] as f64;
            for d in 0..p.out_d {
                let ax = axis(x as f64 * ratio(gx, p.out_w), gx);
                let ay = axis(y as f64 * ratio(gy, p.out_h), gy);
                let ad = axis(d as f64 * ratio(gd, p.out_d), gd);
                let ag = axis(g * (gg - 1) as f64, gg);
                let mut acc = 0.0;
                for corner in 0..16 {
                    let pick = |bit: usize, a: (usize, usize, f64)| {
                        if corner >> bit & 1 == 1 {
                            (a.1, a.2)
                        } else {
                            (a.0, 1.0 - a.2)
                        }
                    };
                    let (ix, wx) = pick(0, ax);
                    let (iy, wy) = pick(1, ay);
                    let (id, wd) = pick(2, ad);
                    let (ig, wg) = pick(3, ag);
                    acc += wx * wy * wd * wg * grid.get(ix, iy, id, ig) as f64;
                }
                out.push(acc);
            }
        }
    }
    out
}

/// Expected disparity of one column under `softmax(sign * c / tau)`.
pub fn oracle_soft_argmin(col: &[f64], sign: f64, tau: f64) -> f64 {
    let logits: Vec<f64> = col.iter().map(|c| sign * c / tau).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().enumerate().map(|(d, v)| d as f64 * v / z).sum()
}

pub fn f64_dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Central difference of `f` in component `k` of `data`, divided by the
/// step actually realised in f32 rather than the nominal one.
pub fn central_difference(data: &[f32], k: usize, h: f64, mut f: impl FnMut(&[f32]) -> f64) -> f64 {
    let mut v = data.to_vec();
    let (hi, lo) = ((data[k] as f64 + h) as f32, (data[k] as f64 - h) as f32);
    v[k] = hi;
    let up = f(&v);
    v[k] = lo;
    let down = f(&v);
    (up - down) / (hi as f64 - lo as f64)
}

/// Gradient-check error of one instance: `max |fd - an| / max |an|` over
/// every component. Outputs are f32, so each difference carries roughly
/// ulp(output) / 2h of absolute noise; normalising by the gradient's scale
/// rather than component by component keeps analytically tiny entries from
/// being judged on that noise alone.
pub fn gradient_error(an: &[f32], fd: &[f64]) -> f64 {
    let scale = an.iter().fold(0f64, |m, &a| m.max((a as f64).abs()));
    let diff = an.iter().zip(fd).fold(0f64, |m, (&a, &f)| m.max((a as f64 - f).abs()));
    diff / scale.max(f64::MIN_POSITIVE)
}

pub fn volume(shape: [usize; 3], data: Vec<f32>, polarity: Polarity) -> CostVolume {
    CostVolume::new(DenseArray::from_vec(&shape, data).unwrap(), polarity).unwrap()
}
