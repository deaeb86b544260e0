//! End-to-end untrained stereo matcher around the grid upsampler.
//!
//! Stages: luma guidance, downsampling by `factor`, census costs over
//! `d_max / factor` levels, box aggregation, then either a bilateral grid
//! (splat + guided slice under full-resolution luma) or plain trilinear
//! upsampling, and finally soft-argmin regression. Regressed indices are
//! low-resolution levels and are multiplied by `factor`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::features::{
    aggregate_box, census_cost_volume, census_transform, downsample_guidance, to_luma, CostVolume, GuidanceMap,
};
use crate::grid::{
    linear_upsample, slice_backward_with, slice_forward, splat_build, Accumulation, ExecMode, SliceGradients,
    SliceParams, SplatConfig,
};
use crate::imageio::{DisparityMap, Image};
use crate::metrics::{eval_report_with_mask, edge_flat_partition, EvalReport};
use crate::regress::{smooth_l1_backward, smooth_l1_loss, soft_argmin, soft_argmin_backward, Reduction, SoftArgminConfig};

pub mod synth;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Upsampler {
    #[default]
    Cubg,
    Linear,
}

impl FromStr for Upsampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cubg" => Ok(Upsampler::Cubg),
            "linear" => Ok(Upsampler::Linear),
            other => Err(Error::Config(format!("unknown upsampler {other:?} (cubg|linear)"))),
        }
    }
}

impl fmt::Display for Upsampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Upsampler::Cubg => "cubg",
            Upsampler::Linear => "linear",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub factor: usize,
    /// Full-resolution disparity range; `d_max / factor` levels are matched.
    pub d_max: usize,
    pub census_window: usize,
    pub radius_x: usize,
    pub radius_y: usize,
    pub radius_d: usize,
    pub l_grid: usize,
    pub sigma_g: f64,
    pub splat_radius: usize,
    pub sigma_s: f64,
    pub temperature: f32,
    pub upsampler: Upsampler,
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
    /// Use reproducible reductions wherever a faster order-dependent one exists.
    pub deterministic: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            factor: 8,
            d_max: 192,
            census_window: 5,
            radius_x: 2,
            radius_y: 2,
            radius_d: 0,
            l_grid: 32,
            sigma_g: 1.0,
            splat_radius: 1,
            sigma_s: 0.5,
            temperature: 0.05,
            upsampler: Upsampler::Cubg,
            threads: 0,
            deterministic: true,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.factor, 2 | 4 | 8 | 16) {
            return Err(Error::Config(format!("factor must be 2, 4, 8 or 16, got {}", self.factor)));
        }
        if self.d_max == 0 || !self.d_max.is_multiple_of(self.factor) {
            return Err(Error::Config(format!(
                "d_max {} must be a positive multiple of factor {}",
                self.d_max, self.factor
            )));
        }
        if !matches!(self.census_window, 3 | 5 | 7) {
            return Err(Error::Config(format!("census_window must be 3, 5 or 7, got {}", self.census_window)));
        }
        if self.l_grid < 2 {
            return Err(Error::Config("l_grid must be at least 2".into()));
        }
        if !(self.sigma_g > 0.0) || !(self.sigma_s > 0.0) || !(self.temperature > 0.0) {
            return Err(Error::Config("sigma_g, sigma_s and temperature must be positive".into()));
        }
        Ok(())
    }

    /// Low-resolution disparity levels.
    pub fn levels(&self) -> usize {
        self.d_max / self.factor
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "factor" => self.factor = parse_value(key, value)?,
            "d_max" => self.d_max = parse_value(key, value)?,
            "census_window" => self.census_window = parse_value(key, value)?,
            "radius_x" => self.radius_x = parse_value(key, value)?,
            "radius_y" => self.radius_y = parse_value(key, value)?,
            "radius_d" => self.radius_d = parse_value(key, value)?,
            "l_grid" => self.l_grid = parse_value(key, value)?,
            "sigma_g" => self.sigma_g = parse_value(key, value)?,
            "splat_radius" => self.splat_radius = parse_value(key, value)?,
            "sigma_s" => self.sigma_s = parse_value(key, value)?,
            "temperature" => self.temperature = parse_value(key, value)?,
            "upsampler" => self.upsampler = value.parse()?,
            "threads" => self.threads = parse_value(key, value)?,
            "deterministic" => self.deterministic = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines (`#` starts a comment) on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        format!(
            "factor = {}\nd_max = {}\ncensus_window = {}\nradius_x = {}\nradius_y = {}\nradius_d = {}\n\
             l_grid = {}\nsigma_g = {}\nsplat_radius = {}\nsigma_s = {}\ntemperature = {}\nupsampler = {}\nthreads = {}\n\
             deterministic = {}\n",
            self.factor,
            self.d_max,
            self.census_window,
            self.radius_x,
            self.radius_y,
            self.radius_d,
            self.l_grid,
            self.sigma_g,
            self.splat_radius,
            self.sigma_s,
            self.temperature,
            self.upsampler,
            self.threads,
            self.deterministic
        )
    }

    fn splat(&self) -> SplatConfig {
        SplatConfig {
            levels: self.l_grid,
            sigma_g: self.sigma_g,
            radius: self.splat_radius,
            sigma_s: self.sigma_s,
        }
    }

    fn accumulation(&self) -> Accumulation {
        if self.deterministic {
            Accumulation::PartialGrids
        } else {
            Accumulation::Atomic
        }
    }

    /// Runs `f` on a pool with `threads` workers, or on the global pool.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        if self.threads == 0 {
            return Ok(f());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

/// Wall-clock time per stage in milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub cost_ms: f64,
    pub aggregate_ms: f64,
    pub grid_ms: f64,
    pub slice_ms: f64,
    pub regress_ms: f64,
}

impl StageTimings {
    pub fn total_ms(&self) -> f64 {
        self.cost_ms + self.aggregate_ms + self.grid_ms + self.slice_ms + self.regress_ms
    }
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot = start.elapsed().as_secs_f64() * 1e3;
    out
}

/// Low-resolution state shared by both upsamplers.
#[derive(Clone, Debug)]
pub struct LowResolution {
    pub cost: CostVolume,
    pub guidance_low: GuidanceMap,
    pub guidance_full: GuidanceMap,
    pub timings: StageTimings,
}

impl LowResolution {
    /// FNV-1a over the bit patterns of the aggregated cost volume.
    pub fn checksum(&self) -> u64 {
        self.cost.values().iter().fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
            v.to_bits()
                .to_le_bytes()
                .iter()
                .fold(h, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
        })
    }
}

fn check_pair(left: &Image, right: &Image, cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    if left.width() != right.width() || left.height() != right.height() {
        return Err(Error::ShapeMismatch(format!(
            "left {}x{} vs right {}x{}",
            left.width(),
            left.height(),
            right.width(),
            right.height()
        )));
    }
    let min_side = cfg.factor * cfg.census_window;
    if left.width() < min_side || left.height() < min_side {
        return Err(Error::ShapeMismatch(format!(
            "images must be at least {min_side} pixels on each side"
        )));
    }
    Ok(())
}

/// Cost construction and aggregation at low resolution.
pub fn prepare(left: &Image, right: &Image, cfg: &PipelineConfig) -> Result<LowResolution> {
    check_pair(left, right, cfg)?;
    let mut t = StageTimings::default();
    let (guidance_full, guidance_low, cost) = timed(&mut t.cost_ms, || -> Result<_> {
        let gl = to_luma(left);
        let gr = to_luma(right);
        let low_l = downsample_guidance(&gl, cfg.factor)?;
        let low_r = downsample_guidance(&gr, cfg.factor)?;
        let cl = census_transform(low_l.array(), cfg.census_window)?;
        let cr = census_transform(low_r.array(), cfg.census_window)?;
        let cost = census_cost_volume(&cl, &cr, cfg.levels())?;
        Ok((gl, low_l, cost))
    })?;
    let cost = timed(&mut t.aggregate_ms, || {
        aggregate_box(&cost, cfg.radius_x, cfg.radius_y, cfg.radius_d)
    });
    Ok(LowResolution {
        cost,
        guidance_low,
        guidance_full,
        timings: t,
    })
}

/// Full-resolution cost volume (`d_max / factor` levels) from the shared
/// low-resolution state.
pub fn upsample(low: &LowResolution, cfg: &PipelineConfig, upsampler: Upsampler, t: &mut StageTimings) -> Result<CostVolume> {
    let (w, h) = (low.guidance_full.width(), low.guidance_full.height());
    let params = SliceParams::new(w, h, cfg.levels());
    match upsampler {
        Upsampler::Cubg => {
            let grid = timed(&mut t.grid_ms, || splat_build(&low.cost, &low.guidance_low, &cfg.splat()))?;
            timed(&mut t.slice_ms, || slice_forward(&grid, &low.guidance_full, &params))
        }
        Upsampler::Linear => timed(&mut t.slice_ms, || linear_upsample(&low.cost, w, h, cfg.levels())),
    }
}

/// Soft argmin over low-resolution levels, scaled to full-resolution pixels.
pub fn regress(volume: &CostVolume, cfg: &PipelineConfig) -> Result<DisparityMap> {
    let d = soft_argmin(volume, &SoftArgminConfig::new(cfg.temperature)?)?;
    let scale = cfg.factor as f32;
    DisparityMap::all_valid(d.disp().map(|v| v * scale))
}

#[derive(Clone, Debug)]
pub struct MatchOutput {
    pub disparity: DisparityMap,
    pub timings: StageTimings,
    pub low_res_checksum: u64,
}

fn finish(low: &LowResolution, cfg: &PipelineConfig, upsampler: Upsampler) -> Result<MatchOutput> {
    let mut t = low.timings;
    let volume = upsample(low, cfg, upsampler, &mut t)?;
    let disparity = timed(&mut t.regress_ms, || regress(&volume, cfg))?;
    Ok(MatchOutput {
        disparity,
        timings: t,
        low_res_checksum: low.checksum(),
    })
}

/// Disparity of `left` against `right` with the configured upsampler.
pub fn run_match(left: &Image, right: &Image, cfg: &PipelineConfig) -> Result<MatchOutput> {
    cfg.install(|| {
        let low = prepare(left, right, cfg)?;
        finish(&low, cfg, cfg.upsampler)
    })?
}

/// Both upsamplers evaluated on one shared low-resolution volume.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub cubg: EvalReport,
    pub linear: EvalReport,
    pub cubg_output: MatchOutput,
    pub linear_output: MatchOutput,
}

impl Comparison {
    /// `linear - cubg` per metric; positive values favour the grid.
    pub fn delta(&self) -> ReportDelta {
        ReportDelta {
            epe: self.linear.epe - self.cubg.epe,
            epe_edge: self.linear.epe_edge - self.cubg.epe_edge,
            epe_flat: self.linear.epe_flat - self.cubg.epe_flat,
            bad_2: self.linear.bad_2 - self.cubg.bad_2,
            d1_all: self.linear.d1_all - self.cubg.d1_all,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("upsampler,{}\n", crate::metrics::REPORT_CSV_HEADER);
        s += &format!("cubg,{}\n", self.cubg.to_csv_row());
        s += &format!("linear,{}\n", self.linear.to_csv_row());
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReportDelta {
    pub epe: f64,
    pub epe_edge: f64,
    pub epe_flat: f64,
    pub bad_2: f64,
    pub d1_all: f64,
}

pub fn upsample_compare(left: &Image, right: &Image, gt: &DisparityMap, cfg: &PipelineConfig) -> Result<Comparison> {
    if gt.width() != left.width() || gt.height() != left.height() {
        return Err(Error::ShapeMismatch("ground truth size differs from the images".into()));
    }
    let mask = edge_flat_partition(gt)?;
    cfg.install(|| {
        let low = prepare(left, right, cfg)?;
        let report = |out: &MatchOutput| -> Result<EvalReport> {
            let mut r = eval_report_with_mask(&out.disparity, gt, &mask)?;
            r.time_ms = Some(out.timings.total_ms());
            Ok(r)
        };
        let cubg_output = finish(&low, cfg, Upsampler::Cubg)?;
        let linear_output = finish(&low, cfg, Upsampler::Linear)?;
        Ok(Comparison {
            cubg: report(&cubg_output)?,
            linear: report(&linear_output)?,
            cubg_output,
            linear_output,
        })
    })?
}

/// Loss and slice gradients for one stereo pair under the grid upsampler.
#[derive(Clone, Debug)]
pub struct PipelineGradient {
    pub loss: f64,
    pub slice: SliceGradients,
}

/// Smooth L1 loss of the CUBG prediction against `gt` (in full-resolution
/// pixels) and its gradient with respect to the grid and the guidance map.
pub fn grid_gradient(left: &Image, right: &Image, gt: &DisparityMap, cfg: &PipelineConfig) -> Result<PipelineGradient> {
    cfg.install(|| {
        let low = prepare(left, right, cfg)?;
        let (w, h) = (left.width(), left.height());
        let params = SliceParams::new(w, h, cfg.levels());
        let grid = splat_build(&low.cost, &low.guidance_low, &cfg.splat())?;
        let volume = slice_forward(&grid, &low.guidance_full, &params)?;
        let pred = regress(&volume, cfg)?;
        let loss = smooth_l1_loss(&pred, gt)?;
        let dpred = smooth_l1_backward(&pred, gt, Reduction::Mean)?;
        // prediction = factor * soft_argmin
        let dindex = dpred.map(|v| v * cfg.factor as f32);
        let soft = SoftArgminConfig::new(cfg.temperature)?;
        let dvol = soft_argmin_backward(&volume, &soft, &dindex)?;
        let slice = slice_backward_with(
            &grid,
            &low.guidance_full,
            &params,
            &dvol,
            ExecMode::Parallel,
            cfg.accumulation(),
        )?;
        Ok(PipelineGradient { loss, slice })
    })?
}

/// Mean per-stage timings for one image size.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub width: usize,
    pub height: usize,
    pub runs: usize,
    pub cubg: StageTimings,
    pub linear_slice_ms: f64,
}

pub const BENCH_CSV_HEADER: &str = "width,height,runs,cost_ms,aggregate_ms,grid_ms,slice_ms,regress_ms,linear_upsample_ms";

impl BenchRow {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
            self.width,
            self.height,
            self.runs,
            self.cubg.cost_ms,
            self.cubg.aggregate_ms,
            self.cubg.grid_ms,
            self.cubg.slice_ms,
            self.cubg.regress_ms,
            self.linear_slice_ms
        )
    }
}

/// Parses `WxH[,WxH...]`.
pub fn parse_sizes(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(|s| {
            let (w, h) = s
                .trim()
                .split_once('x')
                .ok_or_else(|| Error::Config(format!("size {s:?} is not WxH")))?;
            Ok((parse_value("width", w)?, parse_value("height", h)?))
        })
        .collect()
}

/// Times every stage on a synthetic pair per size: one warm-up run, then
/// the mean of `runs` (at least 5) timed runs.
pub fn bench(cfg: &PipelineConfig, sizes: &[(usize, usize)], runs: usize) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let runs = runs.max(5);
    sizes
        .iter()
        .map(|&(w, h)| {
            let scene = synth::generate(synth::Scene::Square, w, h, 7)?;
            cfg.install(|| -> Result<BenchRow> {
                let mut acc = StageTimings::default();
                let mut linear = 0.0;
                for i in 0..=runs {
                    let low = prepare(&scene.left, &scene.right, cfg)?;
                    let out = finish(&low, cfg, Upsampler::Cubg)?;
                    let mut lt = StageTimings::default();
                    upsample(&low, cfg, Upsampler::Linear, &mut lt)?;
                    if i == 0 {
                        continue;
                    }
                    let t = out.timings;
                    acc.cost_ms += t.cost_ms;
                    acc.aggregate_ms += t.aggregate_ms;
                    acc.grid_ms += t.grid_ms;
                    acc.slice_ms += t.slice_ms;
                    acc.regress_ms += t.regress_ms;
                    linear += lt.slice_ms;
                }
                let n = runs as f64;
                Ok(BenchRow {
                    width: w,
                    height: h,
                    runs,
                    cubg: StageTimings {
                        cost_ms: acc.cost_ms / n,
                        aggregate_ms: acc.aggregate_ms / n,
                        grid_ms: acc.grid_ms / n,
                        slice_ms: acc.slice_ms / n,
                        regress_ms: acc.regress_ms / n,
                    },
                    linear_slice_ms: linear / n,
                })
            })?
        })
        .collect()
}

/// Median of the disparities selected by `mask`.
pub fn masked_median(d: &DisparityMap, mask: impl Fn(usize) -> bool) -> Option<f32> {
    let mut v: Vec<f32> = d
        .values()
        .iter()
        .enumerate()
        .filter(|&(i, _)| d.valid()[i] && mask(i))
        .map(|(_, &v)| v)
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f32::total_cmp);
    Some(v[v.len() / 2])
}
