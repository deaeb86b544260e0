//! Bilateral grid of matching costs and its slicing operator.
//!
//! A grid is stored as `[X, Y, Dg, G]` (guidance bins fastest). Slicing
//! reads it at `(x*s_x, y*s_y, d*s_d, G(x,y)*s_G)` by quadrilinear
//! interpolation, with align-corners ratios `s = (grid - 1) / (out - 1)`
//! and `s_G = G - 1`. All coordinates are clamped to the grid.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};

use rayon::prelude::*;

use crate::array::DenseArray;
use crate::error::{Error, Result};
use crate::features::{CostVolume, GroupCostVolume, GuidanceMap, Polarity};

/// Bins whose accumulated splat weight falls below this are filled from
/// the nearest populated bin.
pub const EMPTY_BIN_WEIGHT: f64 = 1e-12;

/// Number of row chunks used for deterministic gradient reduction.
const REDUCTION_CHUNKS: usize = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExecMode {
    /// Same work decomposition as `Parallel`, executed on the calling thread.
    Sequential,
    #[default]
    Parallel,
}

/// How the grid gradient is accumulated in [`slice_backward_with`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Accumulation {
    /// Per-chunk partial grids summed in a fixed order. Bit-reproducible.
    #[default]
    PartialGrids,
    /// Atomic adds into one shared grid. Low-order bits depend on scheduling.
    Atomic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BilateralGrid {
    b: DenseArray,
    polarity: Polarity,
}

impl BilateralGrid {
    pub fn new(b: DenseArray, polarity: Polarity) -> Result<Self> {
        if b.rank() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "grid must be [X, Y, Dg, G], got {:?}",
                b.shape()
            )));
        }
        if b.shape()[3] < 2 {
            return Err(Error::ShapeMismatch("grid needs at least 2 guidance levels".into()));
        }
        if !b.all_finite() {
            return Err(Error::Numeric("grid has non-finite values".into()));
        }
        Ok(Self { b, polarity })
    }

    pub fn width(&self) -> usize {
        self.b.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.b.shape()[1]
    }

    pub fn levels(&self) -> usize {
        self.b.shape()[2]
    }

    /// Number of guidance bins (`l_grid`).
    pub fn guidance_levels(&self) -> usize {
        self.b.shape()[3]
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    pub fn array(&self) -> &DenseArray {
        &self.b
    }

    pub fn values(&self) -> &[f32] {
        self.b.data()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, d: usize, g: usize) -> f32 {
        let s = self.b.shape();
        self.b.data()[((x * s[1] + y) * s[2] + d) * s[3] + g]
    }
}

/// Output extents of a slice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SliceParams {
    pub out_w: usize,
    pub out_h: usize,
    pub out_d: usize,
}

/// Coordinate scale factors `(s_x, s_y, s_d, s_G)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SliceRatios {
    pub x: f64,
    pub y: f64,
    pub d: f64,
    pub g: f64,
}

fn align_ratio(grid: usize, out: usize) -> f64 {
    (grid - 1) as f64 / (out.max(2) - 1) as f64
}

impl SliceParams {
    pub fn new(out_w: usize, out_h: usize, out_d: usize) -> Self {
        Self { out_w, out_h, out_d }
    }

    pub fn ratios(&self, grid: &BilateralGrid) -> SliceRatios {
        SliceRatios {
            x: align_ratio(grid.width(), self.out_w),
            y: align_ratio(grid.height(), self.out_h),
            d: align_ratio(grid.levels(), self.out_d),
            g: (grid.guidance_levels() - 1) as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.out_w == 0 || self.out_h == 0 || self.out_d == 0 {
            return Err(Error::ShapeMismatch(format!("empty slice extents {self:?}")));
        }
        Ok(())
    }
}

/// Linear interpolation stencil along one axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lerp {
    pub i0: usize,
    pub i1: usize,
    pub t: f32,
    /// False when the coordinate was clamped or the axis is degenerate;
    /// the derivative along the axis is zero there.
    pub inside: bool,
}

impl Lerp {
    #[inline]
    pub fn new(coord: f64, extent: usize) -> Self {
        if extent == 1 {
            return Lerp { i0: 0, i1: 0, t: 0.0, inside: false };
        }
        let last = (extent - 1) as f64;
        let inside = (0.0..=last).contains(&coord);
        let c = coord.clamp(0.0, last);
        let i0 = (c.floor() as usize).min(extent - 2);
        Lerp {
            i0,
            i1: i0 + 1,
            t: (c - i0 as f64) as f32,
            inside,
        }
    }
}

/// The 16 corner indices `[x, y, d, g]` and weights used to slice output
/// element `(x, y, d)` with guidance value `guide`.
pub fn corner_weights(
    grid: &BilateralGrid,
    params: &SliceParams,
    x: usize,
    y: usize,
    d: usize,
    guide: f32,
) -> [([usize; 4], f32); 16] {
    let r = params.ratios(grid);
    let axes = [
        Lerp::new(x as f64 * r.x, grid.width()),
        Lerp::new(y as f64 * r.y, grid.height()),
        Lerp::new(d as f64 * r.d, grid.levels()),
        Lerp::new(guide as f64 * r.g, grid.guidance_levels()),
    ];
    let mut out = [([0; 4], 0f32); 16];
    for (n, slot) in out.iter_mut().enumerate() {
        let mut idx = [0; 4];
        let mut w = 1f32;
        for (a, l) in axes.iter().enumerate() {
            if n >> a & 1 == 1 {
                idx[a] = l.i1;
                w *= l.t;
            } else {
                idx[a] = l.i0;
                w *= 1.0 - l.t;
            }
        }
        *slot = (idx, w);
    }
    out
}

/// Parameters of the deterministic splat.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplatConfig {
    /// Guidance bins (`l_grid`), at least 2.
    pub levels: usize,
    /// Gaussian width along the guidance axis, in bins.
    pub sigma_g: f64,
    /// Half-size of the square low-resolution neighbourhood each cell
    /// gathers from. Zero splats every cell only into its own column.
    pub radius: usize,
    /// Spatial Gaussian width, in low-resolution cells, weighting the
    /// neighbourhood. Small values keep each cell's own cost dominant in
    /// bins it populates and let neighbours fill the bins it leaves empty.
    pub sigma_s: f64,
}

impl Default for SplatConfig {
    fn default() -> Self {
        Self {
            levels: 32,
            sigma_g: 1.0,
            radius: 1,
            sigma_s: 0.5,
        }
    }
}

/// Builds a grid by splatting a low-resolution cost volume along the
/// guidance axis.
///
/// Every low-resolution pixel `j` in the neighbourhood of cell `(x, y)`
/// deposits its cost column into bin `g` with weight
/// `s_j * exp(-((g - z_j)^2 - e_j^2) / (2 sigma_g^2))`, where
/// `z_j = gl_j * (levels - 1)`, `e_j` is the distance from `z_j` to its
/// nearest bin (so that bin always receives the full spatial weight) and
/// `s_j = exp(-|j - (x, y)|^2 / (2 sigma_s^2))`. Each bin stores the weighted mean of the
/// deposited costs; bins with total weight below [`EMPTY_BIN_WEIGHT`] copy
/// the nearest populated bin of the same column (lower bin on ties).
pub fn splat_build(cl: &CostVolume, gl: &GuidanceMap, cfg: &SplatConfig) -> Result<BilateralGrid> {
    if cl.width() != gl.width() || cl.height() != gl.height() {
        return Err(Error::ShapeMismatch(format!(
            "cost volume {}x{} vs guidance {}x{}",
            cl.width(),
            cl.height(),
            gl.width(),
            gl.height()
        )));
    }
    if cfg.levels < 2 || !(cfg.sigma_g > 0.0) || !(cfg.sigma_s > 0.0) {
        return Err(Error::Config(format!("invalid splat config {cfg:?}")));
    }
    let (w, h, nd, ng) = (cl.width(), cl.height(), cl.levels(), cfg.levels);
    let inv_two_var = 1.0 / (2.0 * cfg.sigma_g * cfg.sigma_g);
    let inv_two_var_s = 1.0 / (2.0 * cfg.sigma_s * cfg.sigma_s);
    let scale = (ng - 1) as f64;
    let r = cfg.radius as isize;
    let gv = gl.values();
    let cv = cl.values();

    let mut data = vec![0f32; w * h * nd * ng];
    data.par_chunks_mut(h * nd * ng).enumerate().for_each(|(x, plane)| {
        let mut acc = vec![0f64; nd * ng];
        let mut wsum = vec![0f64; ng];
        for y in 0..h {
            acc.fill(0.0);
            wsum.fill(0.0);
            for yy in (y as isize - r).max(0)..=(y as isize + r).min(h as isize - 1) {
                for xx in (x as isize - r).max(0)..=(x as isize + r).min(w as isize - 1) {
                    let j = yy as usize * w + xx as usize;
                    let (ox, oy) = ((xx - x as isize) as f64, (yy - y as isize) as f64);
                    let spatial = (-(ox * ox + oy * oy) * inv_two_var_s).exp();
                    let z = gv[j] as f64 * scale;
                    let e = z - z.round();
                    let col = &cv[j * nd..(j + 1) * nd];
                    for g in 0..ng {
                        let dz = g as f64 - z;
                        let wt = spatial * (-(dz * dz - e * e) * inv_two_var).exp();
                        if wt == 0.0 {
                            continue;
                        }
                        wsum[g] += wt;
                        for (d, &c) in col.iter().enumerate() {
                            acc[d * ng + g] += wt * c as f64;
                        }
                    }
                }
            }
            let cell = &mut plane[y * nd * ng..(y + 1) * nd * ng];
            let populated: Vec<usize> = (0..ng).filter(|&g| wsum[g] >= EMPTY_BIN_WEIGHT).collect();
            for g in 0..ng {
                let src = if wsum[g] >= EMPTY_BIN_WEIGHT {
                    g
                } else {
                    // populated is ascending, so min_by_key keeps the lower bin on ties
                    *populated
                        .iter()
                        .min_by_key(|&&p| p.abs_diff(g))
                        .expect("nearest bin of the centre pixel is always populated")
                };
                for d in 0..nd {
                    cell[d * ng + g] = (acc[d * ng + src] / wsum[src]) as f32;
                }
            }
        }
    });
    BilateralGrid::new(DenseArray::from_vec(&[w, h, nd, ng], data)?, cl.polarity())
}

/// Per-cell linear map from `inputs` group channels to `levels` guidance
/// bins: `weights` is `[levels, inputs]` row-major, `bias` is `[levels]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGridWeights {
    levels: usize,
    inputs: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl LinearGridWeights {
    pub fn new(levels: usize, inputs: usize, weights: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if levels < 2 || inputs == 0 || weights.len() != levels * inputs || bias.len() != levels {
            return Err(Error::ShapeMismatch(format!(
                "linear grid weights need {}x{} matrix and {} biases, got {} and {}",
                levels,
                inputs,
                levels,
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite grid weights".into()));
        }
        Ok(Self {
            levels,
            inputs,
            weights,
            bias,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }
}

/// Reads `GRIDW <levels> <inputs>\n` followed by the matrix and the bias as
/// little-endian `f32`.
pub fn decode_grid_weights<R: Read>(mut r: R) -> Result<LinearGridWeights> {
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(Error::Format("unexpected end of GRIDW header".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
        if header.len() > 128 {
            return Err(Error::Format("GRIDW header too long".into()));
        }
    }
    let header = String::from_utf8(header).map_err(|_| Error::Format("GRIDW header is not UTF-8".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 || fields[0] != "GRIDW" {
        return Err(Error::Format(format!("bad GRIDW header {header:?}")));
    }
    let parse = |t: &str| {
        t.parse::<usize>()
            .ok()
            .filter(|&v| v > 0 && v <= 1 << 16)
            .ok_or_else(|| Error::Format(format!("bad GRIDW dimension {t:?}")))
    };
    let (levels, inputs) = (parse(fields[1])?, parse(fields[2])?);
    let n = levels * inputs + levels;
    let mut payload = vec![0u8; n * 4];
    r.read_exact(&mut payload)
        .map_err(|_| Error::Format("truncated GRIDW payload".into()))?;
    let mut values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let bias = values.split_off(levels * inputs);
    LinearGridWeights::new(levels, inputs, values, bias)
}

pub fn encode_grid_weights<W: Write>(mut w: W, lw: &LinearGridWeights) -> Result<()> {
    writeln!(w, "GRIDW {} {}", lw.levels, lw.inputs)?;
    for v in lw.weights.iter().chain(&lw.bias) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_grid_weights(path: impl AsRef<Path>) -> Result<LinearGridWeights> {
    decode_grid_weights(BufReader::new(File::open(path)?))
}

pub fn write_grid_weights(path: impl AsRef<Path>, lw: &LinearGridWeights) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_grid_weights(&mut w, lw)?;
    w.flush()?;
    Ok(())
}

/// `b(x, y, d, g) = sum_k weights[g, k] * gc(k, y, x, d) + bias[g]`.
pub fn convert_linear(gc: &GroupCostVolume, lw: &LinearGridWeights) -> Result<BilateralGrid> {
    if gc.groups() != lw.inputs {
        return Err(Error::ShapeMismatch(format!(
            "grid weights expect {} groups, volume has {}",
            lw.inputs,
            gc.groups()
        )));
    }
    let (w, h, nd, ng, nk) = (gc.width(), gc.height(), gc.levels(), lw.levels, lw.inputs);
    let plane = h * w * nd;
    let src = gc.array().data();
    let mut data = vec![0f32; w * h * nd * ng];
    data.par_chunks_mut(h * nd * ng).enumerate().for_each(|(x, out)| {
        for y in 0..h {
            for d in 0..nd {
                let s = (y * w + x) * nd + d;
                for g in 0..ng {
                    let row = &lw.weights[g * nk..(g + 1) * nk];
                    let mut acc = lw.bias[g] as f64;
                    for (k, &wt) in row.iter().enumerate() {
                        acc += wt as f64 * src[k * plane + s] as f64;
                    }
                    out[(y * nd + d) * ng + g] = acc as f32;
                }
            }
        }
    });
    BilateralGrid::new(DenseArray::from_vec(&[w, h, nd, ng], data)?, Polarity::Similarity)
}

fn check_guidance(grid: &BilateralGrid, guide: &GuidanceMap, p: &SliceParams) -> Result<()> {
    p.validate()?;
    if guide.width() != p.out_w || guide.height() != p.out_h {
        return Err(Error::ShapeMismatch(format!(
            "guidance {}x{} vs slice output {}x{}",
            guide.width(),
            guide.height(),
            p.out_w,
            p.out_h
        )));
    }
    let _ = grid;
    Ok(())
}

fn disparity_table(levels: usize, out_d: usize, ratio: f64) -> Vec<Lerp> {
    (0..out_d).map(|d| Lerp::new(d as f64 * ratio, levels)).collect()
}

// Bilinear spatial corners: (flat base offset of the (x, y) column, weight).
#[inline]
fn spatial_corners(lx: &Lerp, ly: &Lerp, height: usize, column: usize) -> [(usize, f32); 4] {
    let base = |x: usize, y: usize| (x * height + y) * column;
    [
        (base(lx.i0, ly.i0), (1.0 - lx.t) * (1.0 - ly.t)),
        (base(lx.i1, ly.i0), lx.t * (1.0 - ly.t)),
        (base(lx.i0, ly.i1), (1.0 - lx.t) * ly.t),
        (base(lx.i1, ly.i1), lx.t * ly.t),
    ]
}

/// Slices the grid to a `[out_h, out_w, out_d]` volume, parallel over rows.
pub fn slice_forward(grid: &BilateralGrid, guide: &GuidanceMap, p: &SliceParams) -> Result<CostVolume> {
    slice_forward_with(grid, guide, p, ExecMode::Parallel)
}

pub fn slice_forward_with(
    grid: &BilateralGrid,
    guide: &GuidanceMap,
    p: &SliceParams,
    mode: ExecMode,
) -> Result<CostVolume> {
    check_guidance(grid, guide, p)?;
    let r = p.ratios(grid);
    let (gh, nd, ng) = (grid.height(), grid.levels(), grid.guidance_levels());
    let dtab = disparity_table(nd, p.out_d, r.d);
    let b = grid.values();
    let gv = guide.values();

    let row_kernel = |y: usize, row: &mut [f32]| {
        let ly = Lerp::new(y as f64 * r.y, gh);
        let mut col = vec![0f32; nd];
        for x in 0..p.out_w {
            let lx = Lerp::new(x as f64 * r.x, grid.width());
            let lz = Lerp::new(gv[y * p.out_w + x] as f64 * r.g, ng);
            let corners = spatial_corners(&lx, &ly, gh, nd * ng);
            let (wz0, wz1) = (1.0 - lz.t, lz.t);
            for (k, c) in col.iter_mut().enumerate() {
                let mut acc = 0f32;
                for &(base, w) in &corners {
                    let o = base + k * ng;
                    acc += w * (wz0 * b[o + lz.i0] + wz1 * b[o + lz.i1]);
                }
                *c = acc;
            }
            let out = &mut row[x * p.out_d..(x + 1) * p.out_d];
            for (o, l) in out.iter_mut().zip(&dtab) {
                *o = (1.0 - l.t) * col[l.i0] + l.t * col[l.i1];
            }
        }
    };

    let mut data = vec![0f32; p.out_h * p.out_w * p.out_d];
    let row_len = p.out_w * p.out_d;
    match mode {
        ExecMode::Parallel => data
            .par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(y, row)| row_kernel(y, row)),
        ExecMode::Sequential => data
            .chunks_mut(row_len)
            .enumerate()
            .for_each(|(y, row)| row_kernel(y, row)),
    }
    CostVolume::new(
        DenseArray::from_vec(&[p.out_h, p.out_w, p.out_d], data)?,
        grid.polarity(),
    )
}

/// Gradients of a scalar objective through [`slice_forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct SliceGradients {
    /// Same shape as the grid.
    pub grid: DenseArray,
    /// Same shape as the guidance map.
    pub guidance: DenseArray,
}

pub fn slice_backward(
    grid: &BilateralGrid,
    guide: &GuidanceMap,
    p: &SliceParams,
    upstream: &DenseArray,
) -> Result<SliceGradients> {
    slice_backward_with(grid, guide, p, upstream, ExecMode::Parallel, Accumulation::PartialGrids)
}

/// Adjoint of the slice. `dB` is the upstream gradient splatted back onto
/// the 16 corners of every output element; `dG` is the upstream gradient
/// times `s_G` times the derivative of the interpolant along the guidance
/// axis, zero where the guidance coordinate was clamped.
pub fn slice_backward_with(
    grid: &BilateralGrid,
    guide: &GuidanceMap,
    p: &SliceParams,
    upstream: &DenseArray,
    mode: ExecMode,
    accumulation: Accumulation,
) -> Result<SliceGradients> {
    check_guidance(grid, guide, p)?;
    if upstream.shape() != [p.out_h, p.out_w, p.out_d] {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient {:?} vs slice output [{}, {}, {}]",
            upstream.shape(),
            p.out_h,
            p.out_w,
            p.out_d
        )));
    }
    let r = p.ratios(grid);
    let (gh, nd, ng) = (grid.height(), grid.levels(), grid.guidance_levels());
    let dtab = disparity_table(nd, p.out_d, r.d);
    let b = grid.values();
    let gv = guide.values();
    let up = upstream.data();
    let grid_len = b.len();

    // Visits one output row; `scatter(offset, value)` receives grid gradient
    // contributions and the returned row holds guidance gradients.
    let row_kernel = |y: usize, dguide: &mut [f32], scatter: &mut dyn FnMut(usize, f32)| {
        let ly = Lerp::new(y as f64 * r.y, gh);
        let mut ucol = vec![0f32; nd];
        for x in 0..p.out_w {
            let lx = Lerp::new(x as f64 * r.x, grid.width());
            let lz = Lerp::new(gv[y * p.out_w + x] as f64 * r.g, ng);
            let corners = spatial_corners(&lx, &ly, gh, nd * ng);
            ucol.fill(0.0);
            let src = &up[(y * p.out_w + x) * p.out_d..(y * p.out_w + x + 1) * p.out_d];
            for (&u, l) in src.iter().zip(&dtab) {
                ucol[l.i0] += (1.0 - l.t) * u;
                ucol[l.i1] += l.t * u;
            }
            let (wz0, wz1) = (1.0 - lz.t, lz.t);
            let mut dz = 0f32;
            for (k, &u) in ucol.iter().enumerate() {
                if u == 0.0 {
                    continue;
                }
                let mut slope = 0f32;
                for &(base, w) in &corners {
                    let o = base + k * ng;
                    scatter(o + lz.i0, w * wz0 * u);
                    scatter(o + lz.i1, w * wz1 * u);
                    slope += w * (b[o + lz.i1] - b[o + lz.i0]);
                }
                dz += u * slope;
            }
            dguide[x] = if lz.inside { dz * r.g as f32 } else { 0.0 };
        }
    };

    let mut dguide = vec![0f32; p.out_h * p.out_w];
    let dgrid = match accumulation {
        Accumulation::PartialGrids => {
            let chunk_rows = p.out_h.div_ceil(REDUCTION_CHUNKS.min(p.out_h));
            let chunk_kernel = |(ci, drows): (usize, &mut [f32])| {
                let mut partial = vec![0f32; grid_len];
                let mut scatter = |o: usize, v: f32| partial[o] += v;
                for (j, drow) in drows.chunks_mut(p.out_w).enumerate() {
                    row_kernel(ci * chunk_rows + j, drow, &mut scatter);
                }
                partial
            };
            let chunks = dguide.chunks_mut(chunk_rows * p.out_w).enumerate();
            let partials: Vec<Vec<f32>> = match mode {
                ExecMode::Parallel => chunks.collect::<Vec<_>>().into_par_iter().map(chunk_kernel).collect(),
                ExecMode::Sequential => chunks.map(chunk_kernel).collect(),
            };
            let mut total = vec![0f32; grid_len];
            for part in &partials {
                for (t, v) in total.iter_mut().zip(part) {
                    *t += v;
                }
            }
            total
        }
        Accumulation::Atomic => {
            let shared: Vec<AtomicU32> = (0..grid_len).map(|_| AtomicU32::new(0)).collect();
            let atomic_add = |o: usize, v: f32| {
                let _ = shared[o].fetch_update(Ordering::Relaxed, Ordering::Relaxed, |bits| {
                    Some((f32::from_bits(bits) + v).to_bits())
                });
            };
            let kernel = |(y, drow): (usize, &mut [f32])| {
                let mut scatter = |o: usize, v: f32| atomic_add(o, v);
                row_kernel(y, drow, &mut scatter);
            };
            match mode {
                ExecMode::Parallel => dguide.par_chunks_mut(p.out_w).enumerate().for_each(kernel),
                ExecMode::Sequential => dguide.chunks_mut(p.out_w).enumerate().for_each(kernel),
            }
            shared.into_iter().map(|a| f32::from_bits(a.into_inner())).collect()
        }
    };

    Ok(SliceGradients {
        grid: DenseArray::from_vec(grid.array().shape(), dgrid)?,
        guidance: DenseArray::from_vec(&[p.out_h, p.out_w], dguide)?,
    })
}

/// Trilinear upsampling of a cost volume with the align-corners convention.
pub fn linear_upsample(cl: &CostVolume, out_w: usize, out_h: usize, out_d: usize) -> Result<CostVolume> {
    if out_w == 0 || out_h == 0 || out_d == 0 {
        return Err(Error::ShapeMismatch("empty upsampling extents".into()));
    }
    let (w, h, nd) = (cl.width(), cl.height(), cl.levels());
    let (rx, ry, rd) = (align_ratio(w, out_w), align_ratio(h, out_h), align_ratio(nd, out_d));
    let dtab = disparity_table(nd, out_d, rd);
    let src = cl.values();
    let mut data = vec![0f32; out_h * out_w * out_d];
    data.par_chunks_mut(out_w * out_d).enumerate().for_each(|(y, row)| {
        let ly = Lerp::new(y as f64 * ry, h);
        let mut col = vec![0f32; nd];
        for x in 0..out_w {
            let lx = Lerp::new(x as f64 * rx, w);
            let corners = [
                ((ly.i0 * w + lx.i0) * nd, (1.0 - lx.t) * (1.0 - ly.t)),
                ((ly.i0 * w + lx.i1) * nd, lx.t * (1.0 - ly.t)),
                ((ly.i1 * w + lx.i0) * nd, (1.0 - lx.t) * ly.t),
                ((ly.i1 * w + lx.i1) * nd, lx.t * ly.t),
            ];
            for (k, c) in col.iter_mut().enumerate() {
                *c = corners.iter().map(|&(base, wt)| wt * src[base + k]).sum();
            }
            for (o, l) in row[x * out_d..(x + 1) * out_d].iter_mut().zip(&dtab) {
                *o = (1.0 - l.t) * col[l.i0] + l.t * col[l.i1];
            }
        }
    });
    CostVolume::new(DenseArray::from_vec(&[out_h, out_w, out_d], data)?, cl.polarity())
}
