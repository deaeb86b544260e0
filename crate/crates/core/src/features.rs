//! Guidance maps and matching-cost volumes.
//!
//! Volumes are laid out `[H, W, D]` (disparity fastest), group volumes
//! `[G, H, W, D]` and feature maps `[C, H, W]`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::array::DenseArray;
use crate::error::{Error, Result};
use crate::imageio::Image;

/// Default number of correlation groups.
pub const DEFAULT_GROUPS: usize = 44;

/// Whether larger volume values mean a worse or a better match.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    Cost,
    Similarity,
}

/// Scalar guidance field in `[0, 1]`, shape `[H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GuidanceMap {
    g: DenseArray,
}

impl GuidanceMap {
    pub fn new(g: DenseArray) -> Result<Self> {
        if g.rank() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "guidance must be [H, W], got {:?}",
                g.shape()
            )));
        }
        if g.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Numeric("guidance values must lie in [0, 1]".into()));
        }
        Ok(Self { g })
    }

    pub fn width(&self) -> usize {
        self.g.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.g.shape()[0]
    }

    pub fn array(&self) -> &DenseArray {
        &self.g
    }

    pub fn values(&self) -> &[f32] {
        self.g.data()
    }
}

/// Feature map `[C, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    f: DenseArray,
}

impl FeatureMap {
    pub fn new(f: DenseArray) -> Result<Self> {
        if f.rank() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "feature map must be [C, H, W], got {:?}",
                f.shape()
            )));
        }
        if !f.all_finite() {
            return Err(Error::Numeric("feature map has non-finite values".into()));
        }
        Ok(Self { f })
    }

    pub fn channels(&self) -> usize {
        self.f.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.f.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.f.shape()[2]
    }

    pub fn array(&self) -> &DenseArray {
        &self.f
    }
}

/// Reads a raw feature map: `FMAP <C> <H> <W>\n` followed by `C*H*W`
/// little-endian `f32` values.
pub fn decode_fmap<R: Read>(mut r: R) -> Result<FeatureMap> {
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(Error::Format("unexpected end of FMAP header".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
        if header.len() > 128 {
            return Err(Error::Format("FMAP header too long".into()));
        }
    }
    let header = String::from_utf8(header).map_err(|_| Error::Format("FMAP header is not UTF-8".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "FMAP" {
        return Err(Error::Format(format!("bad FMAP header {header:?}")));
    }
    let dims = fields[1..]
        .iter()
        .map(|t| t.parse::<usize>().ok().filter(|&v| v > 0))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Format(format!("bad FMAP dimensions {header:?}")))?;
    let n = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| Error::Format("FMAP dimensions overflow".into()))?;
    let mut payload = vec![0u8; n * 4];
    r.read_exact(&mut payload)
        .map_err(|_| Error::Format("truncated FMAP payload".into()))?;
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    FeatureMap::new(DenseArray::from_vec(&dims, values)?)
}

pub fn encode_fmap<W: Write>(mut w: W, f: &FeatureMap) -> Result<()> {
    writeln!(w, "FMAP {} {} {}", f.channels(), f.height(), f.width())?;
    for v in f.array().data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_fmap(path: impl AsRef<Path>) -> Result<FeatureMap> {
    decode_fmap(BufReader::new(File::open(path)?))
}

pub fn write_fmap(path: impl AsRef<Path>, f: &FeatureMap) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_fmap(&mut w, f)?;
    w.flush()?;
    Ok(())
}

/// Matching-cost volume `[H, W, D]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostVolume {
    c: DenseArray,
    polarity: Polarity,
}

impl CostVolume {
    pub fn new(c: DenseArray, polarity: Polarity) -> Result<Self> {
        if c.rank() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "cost volume must be [H, W, D], got {:?}",
                c.shape()
            )));
        }
        if !c.all_finite() {
            return Err(Error::Numeric("cost volume has non-finite values".into()));
        }
        Ok(Self { c, polarity })
    }

    pub fn height(&self) -> usize {
        self.c.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.c.shape()[1]
    }

    /// Number of disparity levels.
    pub fn levels(&self) -> usize {
        self.c.shape()[2]
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    pub fn array(&self) -> &DenseArray {
        &self.c
    }

    pub fn values(&self) -> &[f32] {
        self.c.data()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, d: usize) -> f32 {
        self.c.data()[(y * self.width() + x) * self.levels() + d]
    }
}

/// Group-wise correlation volume `[G, H, W, D]` (similarity polarity).
#[derive(Clone, Debug, PartialEq)]
pub struct GroupCostVolume {
    c: DenseArray,
}

impl GroupCostVolume {
    pub fn new(c: DenseArray) -> Result<Self> {
        if c.rank() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "group volume must be [G, H, W, D], got {:?}",
                c.shape()
            )));
        }
        if !c.all_finite() {
            return Err(Error::Numeric("group volume has non-finite values".into()));
        }
        Ok(Self { c })
    }

    pub fn groups(&self) -> usize {
        self.c.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.c.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.c.shape()[2]
    }

    pub fn levels(&self) -> usize {
        self.c.shape()[3]
    }

    pub fn array(&self) -> &DenseArray {
        &self.c
    }
}

/// BT.601 luma scaled to `[0, 1]`.
pub fn to_luma(img: &Image) -> GuidanceMap {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let src = img.data().data();
    let values = (0..w * h)
        .map(|i| {
            let p = &src[i * ch..(i + 1) * ch];
            let y = if ch == 3 {
                0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
            } else {
                p[0] as f64
            };
            (y / 255.0).clamp(0.0, 1.0) as f32
        })
        .collect();
    let g = DenseArray::from_vec(&[h, w], values).expect("shape matches image");
    GuidanceMap { g }
}

/// Census codes of a grayscale image; bit `b` refers to the `b`-th
/// neighbour in row-major window order with the centre skipped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CensusImage {
    width: usize,
    height: usize,
    window: usize,
    codes: Vec<u64>,
}

impl CensusImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Bits per code: `window^2 - 1`.
    pub fn bits(&self) -> u32 {
        (self.window * self.window - 1) as u32
    }

    pub fn codes(&self) -> &[u64] {
        &self.codes
    }

    #[inline]
    pub fn code(&self, x: usize, y: usize) -> u64 {
        self.codes[y * self.width + x]
    }
}

/// Census transform with edge-clamped neighbours.
pub fn census_transform(gray: &DenseArray, window: usize) -> Result<CensusImage> {
    if !matches!(window, 3 | 5 | 7) {
        return Err(Error::InvalidWindow(window));
    }
    if gray.rank() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "census input must be [H, W], got {:?}",
            gray.shape()
        )));
    }
    let (h, w) = (gray.shape()[0], gray.shape()[1]);
    if h < window || w < window {
        return Err(Error::ShapeMismatch(format!(
            "image {w}x{h} is smaller than census window {window}"
        )));
    }
    let r = (window / 2) as isize;
    let src = gray.data();
    let mut codes = vec![0u64; w * h];
    codes.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, code) in row.iter_mut().enumerate() {
            let center = src[y * w + x];
            let mut bits = 0u64;
            let mut b = 0;
            for dy in -r..=r {
                let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                for dx in -r..=r {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    if src[yy * w + xx] < center {
                        bits |= 1 << b;
                    }
                    b += 1;
                }
            }
            *code = bits;
        }
    });
    Ok(CensusImage {
        width: w,
        height: h,
        window,
        codes,
    })
}

/// Normalized Hamming distance between two codes of `bits` bits.
#[inline]
pub fn hamming_cost(a: u64, b: u64, bits: u32) -> f32 {
    (a ^ b).count_ones() as f32 / bits as f32
}

/// Census matching cost `c(x, y, d)` between left `(x, y)` and right
/// `(x - d, y)`; positions with `x < d` get the maximum cost 1.
pub fn census_cost_volume(left: &CensusImage, right: &CensusImage, levels: usize) -> Result<CostVolume> {
    if left.width != right.width || left.height != right.height || left.window != right.window {
        return Err(Error::ShapeMismatch("census images differ in shape or window".into()));
    }
    if levels == 0 {
        return Err(Error::ShapeMismatch("need at least one disparity level".into()));
    }
    let (w, h) = (left.width, left.height);
    let bits = left.bits();
    let mut data = vec![0f32; h * w * levels];
    data.par_chunks_mut(w * levels).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let l = left.code(x, y);
            for d in 0..levels {
                row[x * levels + d] = if x >= d {
                    hamming_cost(l, right.code(x - d, y), bits)
                } else {
                    1.0
                };
            }
        }
    });
    CostVolume::new(DenseArray::from_vec(&[h, w, levels], data)?, Polarity::Cost)
}

/// Group-wise correlation: for group `g` with channel slice `S_g`,
/// `c(g, y, x, d) = (G / C) * sum_{ch in S_g} fl(ch, y, x) * fr(ch, y, x - d)`,
/// zero where `x < d`.
pub fn groupwise_correlation(
    fl: &FeatureMap,
    fr: &FeatureMap,
    groups: usize,
    levels: usize,
) -> Result<GroupCostVolume> {
    if fl.array().shape() != fr.array().shape() {
        return Err(Error::ShapeMismatch(format!(
            "feature maps {:?} vs {:?}",
            fl.array().shape(),
            fr.array().shape()
        )));
    }
    let c = fl.channels();
    if groups == 0 || !c.is_multiple_of(groups) {
        return Err(Error::GroupMismatch { groups, channels: c });
    }
    if levels == 0 {
        return Err(Error::ShapeMismatch("need at least one disparity level".into()));
    }
    let (h, w) = (fl.height(), fl.width());
    let per_group = c / groups;
    let plane = h * w;
    let (lf, rf) = (fl.array().data(), fr.array().data());
    let mut data = vec![0f32; groups * plane * levels];
    data.par_chunks_mut(plane * levels)
        .enumerate()
        .for_each(|(g, out)| {
            for y in 0..h {
                for x in 0..w {
                    for d in 0..levels.min(x + 1) {
                        let mut acc = 0f64;
                        for ch in g * per_group..(g + 1) * per_group {
                            let base = ch * plane + y * w;
                            acc += lf[base + x] as f64 * rf[base + x - d] as f64;
                        }
                        out[(y * w + x) * levels + d] = (acc / per_group as f64) as f32;
                    }
                }
            }
        });
    GroupCostVolume::new(DenseArray::from_vec(&[groups, h, w, levels], data)?)
}

/// Mean over the group axis; the result keeps similarity polarity.
pub fn reduce_groups(gc: &GroupCostVolume) -> CostVolume {
    let groups = gc.groups();
    let n = gc.height() * gc.width() * gc.levels();
    let src = gc.array().data();
    let values = (0..n)
        .map(|i| {
            let s: f64 = (0..groups).map(|g| src[g * n + i] as f64).sum();
            (s / groups as f64) as f32
        })
        .collect();
    let shape = [gc.height(), gc.width(), gc.levels()];
    CostVolume::new(DenseArray::from_vec(&shape, values).expect("shape"), Polarity::Similarity)
        .expect("finite mean of finite values")
}

fn check_factor(k: usize) -> Result<()> {
    if matches!(k, 2 | 4 | 8 | 16) {
        Ok(())
    } else {
        Err(Error::InvalidFactor(k))
    }
}

/// Block-mean downsampling of a `[H, W]` or `[H, W, C]` array to
/// `ceil(H/k) x ceil(W/k)`; edge blocks are truncated.
pub fn downsample_avg(a: &DenseArray, k: usize) -> Result<DenseArray> {
    check_factor(k)?;
    let (h, w, ch) = match *a.shape() {
        [h, w] => (h, w, 1),
        [h, w, c] => (h, w, c),
        _ => {
            return Err(Error::ShapeMismatch(format!(
                "downsampling needs [H, W] or [H, W, C], got {:?}",
                a.shape()
            )))
        }
    };
    let (oh, ow) = (h.div_ceil(k), w.div_ceil(k));
    let src = a.data();
    let mut out = vec![0f32; oh * ow * ch];
    for oy in 0..oh {
        let ys = oy * k..((oy + 1) * k).min(h);
        for ox in 0..ow {
            let xs = ox * k..((ox + 1) * k).min(w);
            let count = (ys.len() * xs.len()) as f64;
            for c in 0..ch {
                let mut acc = 0f64;
                for y in ys.clone() {
                    for x in xs.clone() {
                        acc += src[(y * w + x) * ch + c] as f64;
                    }
                }
                out[(oy * ow + ox) * ch + c] = (acc / count) as f32;
            }
        }
    }
    let shape: Vec<usize> = if a.rank() == 2 { vec![oh, ow] } else { vec![oh, ow, ch] };
    DenseArray::from_vec(&shape, out)
}

pub fn downsample_image(img: &Image, k: usize) -> Result<Image> {
    Image::new(downsample_avg(img.data(), k)?)
}

pub fn downsample_guidance(g: &GuidanceMap, k: usize) -> Result<GuidanceMap> {
    let a = downsample_avg(g.array(), k)?;
    // block means of values in [0, 1] can drift by an ulp
    GuidanceMap::new(a.map(|v| v.clamp(0.0, 1.0)))
}

// Clamped box mean along one axis of a 3-D buffer.
fn box_axis(src: &[f32], dims: [usize; 3], axis: usize, radius: usize) -> Vec<f32> {
    if radius == 0 {
        return src.to_vec();
    }
    let strides = [dims[1] * dims[2], dims[2], 1];
    let n = dims[axis];
    let stride = strides[axis];
    let norm = (2 * radius + 1) as f64;
    let mut out = vec![0f32; src.len()];
    out.par_chunks_mut(dims[1] * dims[2])
        .enumerate()
        .for_each(|(i0, plane)| {
            for (rest, slot) in plane.iter_mut().enumerate() {
                let idx = [i0, rest / dims[2], rest % dims[2]];
                let pos = idx[axis] as isize;
                let base = i0 * strides[0] + rest - idx[axis] * stride;
                let mut acc = 0f64;
                for o in -(radius as isize)..=radius as isize {
                    let j = (pos + o).clamp(0, n as isize - 1) as usize;
                    acc += src[base + j * stride] as f64;
                }
                *slot = (acc / norm) as f32;
            }
        });
    out
}

/// Mean over the edge-clamped `(2rx+1) x (2ry+1) x (2rd+1)` box.
pub fn aggregate_box(cv: &CostVolume, rx: usize, ry: usize, rd: usize) -> CostVolume {
    let dims = [cv.height(), cv.width(), cv.levels()];
    let mut buf = box_axis(cv.values(), dims, 2, rd);
    buf = box_axis(&buf, dims, 1, rx);
    buf = box_axis(&buf, dims, 0, ry);
    CostVolume::new(DenseArray::from_vec(&dims, buf).expect("shape"), cv.polarity())
        .expect("box mean of finite values")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rgb(r: f32, g: f32, b: f32) -> Image {
        Image::new(DenseArray::from_vec(&[1, 1, 3], vec![r, g, b]).unwrap()).unwrap()
    }

    #[test]
    fn luma_values() {
        assert_eq!(to_luma(&rgb(255.0, 255.0, 255.0)).values()[0], 1.0);
        assert_eq!(to_luma(&rgb(0.0, 0.0, 0.0)).values()[0], 0.0);
        let expected = (0.299 * 100.0 + 0.587 * 150.0 + 0.114 * 50.0) / 255.0;
        assert_abs_diff_eq!(to_luma(&rgb(100.0, 150.0, 50.0)).values()[0] as f64, expected, epsilon = 1e-6);
        let gray = Image::from_gray(1, 1, vec![51.0]).unwrap();
        assert_abs_diff_eq!(to_luma(&gray).values()[0], 0.2, epsilon = 1e-7);
    }

    #[test]
    fn census_constant_is_zero() {
        let a = DenseArray::full(&[6, 7], 0.3).unwrap();
        let c = census_transform(&a, 5).unwrap();
        assert_eq!(c.bits(), 24);
        assert!(c.codes().iter().all(|&v| v == 0));
    }

    #[test]
    fn census_increasing_raster() {
        let a = DenseArray::from_vec(&[3, 3], (0..9).map(|v| v as f32).collect()).unwrap();
        let c = census_transform(&a, 3).unwrap();
        // neighbours 0..3 precede the centre in raster order
        assert_eq!(c.code(1, 1), 0b0000_1111);
    }

    #[test]
    fn census_swap_flips_two_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<f32> = (0..25).map(|_| rng.gen::<f32>()).collect();
        let mut swapped = vals.clone();
        // centre is index 12; pick neighbours on opposite sides of it
        let (i, j) = (6, 18);
        let center = vals[12];
        swapped.swap(i, j);
        let a = census_transform(&DenseArray::from_vec(&[5, 5], vals.clone()).unwrap(), 5).unwrap();
        let b = census_transform(&DenseArray::from_vec(&[5, 5], swapped).unwrap(), 5).unwrap();
        let diff = a.code(2, 2) ^ b.code(2, 2);
        let expected_flips = ((vals[i] < center) != (vals[j] < center)) as u32 * 2;
        assert_eq!(diff.count_ones(), expected_flips);
        if expected_flips == 2 {
            // bit index skips the centre: flat 6 -> bit 6, flat 18 -> bit 17
            assert_eq!(diff, (1 << 6) | (1 << 17));
        }
    }

    #[test]
    fn census_errors() {
        let a = DenseArray::zeros(&[8, 8]).unwrap();
        assert!(matches!(census_transform(&a, 4), Err(Error::InvalidWindow(4))));
        assert!(matches!(census_transform(&a, 9), Err(Error::InvalidWindow(9))));
        let small = DenseArray::zeros(&[4, 8]).unwrap();
        assert!(census_transform(&small, 5).is_err());
    }

    #[test]
    fn hamming_normalization() {
        assert_eq!(hamming_cost(0b1010, 0b0110, 4), 0.5);
    }

    #[test]
    fn census_cost_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = DenseArray::from_vec(&[6, 9], (0..54).map(|_| rng.gen()).collect()).unwrap();
        let c = census_transform(&img, 3).unwrap();
        let cv = census_cost_volume(&c, &c, 4).unwrap();
        assert_eq!(cv.polarity(), Polarity::Cost);
        for y in 0..6 {
            for x in 0..9 {
                assert_eq!(cv.get(x, y, 0), 0.0);
                for d in x + 1..4 {
                    assert_eq!(cv.get(x, y, d), 1.0);
                }
            }
        }
        assert!(cv.values().iter().all(|v| (0.0..=1.0).contains(v)));
        let other = census_transform(&DenseArray::zeros(&[6, 8]).unwrap(), 3).unwrap();
        assert!(census_cost_volume(&c, &other, 2).is_err());
    }

    #[test]
    fn census_cost_swap_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = DenseArray::from_vec(&[7, 10], (0..70).map(|_| rng.gen()).collect()).unwrap();
        let b = DenseArray::from_vec(&[7, 10], (0..70).map(|_| rng.gen()).collect()).unwrap();
        let (ca, cb) = (census_transform(&a, 5).unwrap(), census_transform(&b, 5).unwrap());
        let levels = 4;
        let ab = census_cost_volume(&ca, &cb, levels).unwrap();
        // the swapped pair matches right (x) against left (x + d)
        for y in 0..7 {
            for x in 0..10 {
                for d in 0..levels.min(x + 1) {
                    let direct = ab.get(x, y, d);
                    let swapped = hamming_cost(cb.code(x - d, y), ca.code(x, y), 24);
                    assert_eq!(direct, swapped);
                }
            }
        }
    }

    fn fmap(c: usize, h: usize, w: usize, v: Vec<f32>) -> FeatureMap {
        FeatureMap::new(DenseArray::from_vec(&[c, h, w], v).unwrap()).unwrap()
    }

    #[test]
    fn correlation_self_and_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f32> = (0..4 * 2 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = fmap(4, 2, 3, v.clone());
        let gc = groupwise_correlation(&f, &f, 2, 2).unwrap();
        for g in 0..2 {
            for p in 0..6 {
                let expect = (v[(2 * g) * 6 + p].powi(2) + v[(2 * g + 1) * 6 + p].powi(2)) / 2.0;
                let got = gc.array().at(&[g, p / 3, p % 3, 0]).unwrap();
                assert_abs_diff_eq!(got, expect, epsilon = 1e-6);
                assert!(got >= 0.0);
            }
        }

        // C=4, G=2, each group holds a unit vector: (N_g / C) * <u, u> = 0.5
        let unit = fmap(4, 1, 1, vec![1.0, 0.0, 0.6, 0.8]);
        let gc = groupwise_correlation(&unit, &unit, 2, 1).unwrap();
        assert_abs_diff_eq!(gc.array().at(&[0, 0, 0, 0]).unwrap(), 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(gc.array().at(&[1, 0, 0, 0]).unwrap(), 0.5, epsilon = 1e-6);
        // with one channel per group the normalization is 1
        let gc = groupwise_correlation(&unit, &unit, 4, 1).unwrap();
        assert_eq!(gc.array().at(&[0, 0, 0, 0]).unwrap(), 1.0);

        let a = fmap(4, 1, 1, vec![1.0, 0.0, 0.0, 1.0]);
        let b = fmap(4, 1, 1, vec![0.0, 1.0, 1.0, 0.0]);
        let gc = groupwise_correlation(&a, &b, 2, 1).unwrap();
        assert!(gc.array().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn correlation_out_of_range_and_errors() {
        let f = fmap(2, 1, 3, vec![1.0; 6]);
        let gc = groupwise_correlation(&f, &f, 1, 3).unwrap();
        assert_eq!(gc.array().at(&[0, 0, 0, 1]).unwrap(), 0.0);
        assert_eq!(gc.array().at(&[0, 0, 1, 2]).unwrap(), 0.0);
        assert_eq!(gc.array().at(&[0, 0, 2, 2]).unwrap(), 1.0);
        assert!(matches!(
            groupwise_correlation(&f, &f, 3, 1),
            Err(Error::GroupMismatch { groups: 3, channels: 2 })
        ));
    }

    #[test]
    fn correlation_bounded_for_unit_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f32> = (0..5 * 4 * 4).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let f = fmap(5, 4, 4, v);
        let gc = groupwise_correlation(&f, &f, 5, 3).unwrap();
        assert!(gc.array().data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn reduce_groups_mean() {
        let one = GroupCostVolume::new(DenseArray::from_vec(&[1, 1, 2, 2], vec![0.5, 1.0, -2.0, 3.0]).unwrap()).unwrap();
        assert_eq!(reduce_groups(&one).values(), &[0.5, 1.0, -2.0, 3.0]);
        let two = GroupCostVolume::new(DenseArray::from_vec(&[2, 1, 1, 1], vec![1.0, 3.0]).unwrap()).unwrap();
        let r = reduce_groups(&two);
        assert_eq!(r.values(), &[2.0]);
        assert_eq!(r.polarity(), Polarity::Similarity);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (g, h, w, d) = (3, 2, 3, 4);
        let v: Vec<f32> = (0..g * h * w * d).map(|_| rng.gen()).collect();
        let gc = GroupCostVolume::new(DenseArray::from_vec(&[g, h, w, d], v.clone()).unwrap()).unwrap();
        let r = reduce_groups(&gc);
        for y in 0..h {
            for x in 0..w {
                for k in 0..d {
                    let mut s = 0.0f64;
                    for gi in 0..g {
                        s += v[((gi * h + y) * w + x) * d + k] as f64;
                    }
                    assert_abs_diff_eq!(r.get(x, y, k) as f64, s / g as f64, epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn downsample_blocks() {
        let c = DenseArray::full(&[9, 7], 0.25).unwrap();
        assert!(downsample_avg(&c, 4).unwrap().data().iter().all(|&v| v == 0.25));
        let a = DenseArray::from_vec(&[2, 2], vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        assert_eq!(downsample_avg(&a, 2).unwrap().data(), &[3.0]);

        let v: Vec<f32> = (0..25).map(|v| v as f32).collect();
        let five = DenseArray::from_vec(&[5, 5], v).unwrap();
        let out = downsample_avg(&five, 2).unwrap();
        assert_eq!(out.shape(), &[3, 3]);
        // hand means: full 2x2 blocks, truncated 2x1 / 1x2 edges and the 1x1 corner
        let expected = [3.0, 5.0, 6.5, 13.0, 15.0, 16.5, 20.5, 22.5, 24.0];
        assert_eq!(out.data(), &expected);
        assert!(matches!(downsample_avg(&five, 3), Err(Error::InvalidFactor(3))));
    }

    #[test]
    fn downsample_preserves_mean_for_multiples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = DenseArray::from_vec(&[8, 16, 3], (0..384).map(|_| rng.gen()).collect()).unwrap();
        let out = downsample_avg(&a, 4).unwrap();
        assert_eq!(out.shape(), &[2, 4, 3]);
        assert_abs_diff_eq!(out.sum() / out.len() as f64, a.sum() / a.len() as f64, epsilon = 1e-6);
    }

    #[test]
    fn box_aggregation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v: Vec<f32> = (0..27).map(|_| rng.gen()).collect();
        let cv = CostVolume::new(DenseArray::from_vec(&[3, 3, 3], v.clone()).unwrap(), Polarity::Cost).unwrap();
        assert_eq!(aggregate_box(&cv, 0, 0, 0), cv);
        let agg = aggregate_box(&cv, 1, 1, 1);
        let mean: f64 = v.iter().map(|&x| x as f64).sum::<f64>() / 27.0;
        assert_abs_diff_eq!(agg.get(1, 1, 1) as f64, mean, epsilon = 1e-6);

        // corner: brute-force mean of 27 clamped samples
        let mut s = 0.0f64;
        for dy in -1i32..=1 {
            for dx in -1i32..=1 {
                for dd in -1i32..=1 {
                    let (y, x, d) = (dy.max(0) as usize, dx.max(0) as usize, dd.max(0) as usize);
                    s += v[(y * 3 + x) * 3 + d] as f64;
                }
            }
        }
        assert_abs_diff_eq!(agg.get(0, 0, 0) as f64, s / 27.0, epsilon = 1e-6);

        let flat = CostVolume::new(DenseArray::full(&[4, 5, 6], 0.7).unwrap(), Polarity::Similarity).unwrap();
        let out = aggregate_box(&flat, 2, 1, 3);
        assert_eq!(out.polarity(), Polarity::Similarity);
        assert!(out.values().iter().all(|&v| (v - 0.7).abs() < 1e-6));
    }

    #[test]
    fn fmap_roundtrip_and_errors() {
        let f = fmap(2, 1, 2, vec![1.0, -2.5, 3.0, 0.125]);
        let mut buf = Vec::new();
        encode_fmap(&mut buf, &f).unwrap();
        assert!(buf.starts_with(b"FMAP 2 1 2\n"));
        assert_eq!(decode_fmap(&buf[..]).unwrap(), f);
        assert!(matches!(decode_fmap(&b"FMAP 2 1\n"[..]), Err(Error::Format(_))));
        assert!(matches!(decode_fmap(&buf[..buf.len() - 1]), Err(Error::Format(_))));
    }
}
