//! Synthetic stereo pairs with known disparity.
//!
//! Two fronto-parallel layers: a bright textured foreground at disparity 8
//! over a dark textured background at disparity 2. Right-image pixels are
//! rendered from the layer seen at `x + d`, so occlusions are consistent
//! with the left-image ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imageio::{DisparityMap, Image};

pub const FOREGROUND_DISPARITY: usize = 8;
pub const BACKGROUND_DISPARITY: usize = 2;

/// Intensity ranges of the two layers (8-bit).
const FOREGROUND_RANGE: (f32, f32) = (165.0, 235.0);
const BACKGROUND_RANGE: (f32, f32) = (20.0, 90.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scene {
    /// Foreground fills the left half of the image.
    Step,
    /// Centred foreground square of half the image height.
    Square,
}

impl std::str::FromStr for Scene {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step" => Ok(Scene::Step),
            "square" => Ok(Scene::Square),
            other => Err(Error::Config(format!("unknown scene {other:?} (step|square)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub left: Image,
    pub right: Image,
    pub gt: DisparityMap,
    /// Left-image pixels on the foreground layer.
    pub foreground: Vec<bool>,
}

/// Multi-octave value noise in `[0, 1]` sampled on integer pixels.
struct Texture {
    octaves: Vec<(usize, usize, Vec<f32>)>,
}

impl Texture {
    fn new(rng: &mut ChaCha8Rng, w: usize, h: usize, cells: &[usize]) -> Self {
        let octaves = cells
            .iter()
            .map(|&cell| {
                let cols = w / cell + 2;
                let rows = h / cell + 2;
                let lattice = (0..cols * rows).map(|_| rng.gen::<f32>()).collect();
                (cell, cols, lattice)
            })
            .collect();
        Self { octaves }
    }

    fn sample(&self, x: usize, y: usize) -> f32 {
        let smooth = |t: f32| t * t * (3.0 - 2.0 * t);
        let mut total = 0.0;
        let mut norm = 0.0;
        for (k, (cell, cols, lattice)) in self.octaves.iter().enumerate() {
            let amp = 0.5f32.powi(k as i32);
            let (cx, cy) = (x / cell, y / cell);
            let tx = smooth((x % cell) as f32 / *cell as f32);
            let ty = smooth((y % cell) as f32 / *cell as f32);
            let at = |i: usize, j: usize| lattice[j * cols + i];
            let top = at(cx, cy) * (1.0 - tx) + at(cx + 1, cy) * tx;
            let bottom = at(cx, cy + 1) * (1.0 - tx) + at(cx + 1, cy + 1) * tx;
            total += amp * (top * (1.0 - ty) + bottom * ty);
            norm += amp;
        }
        total / norm
    }
}

fn in_foreground(scene: Scene, w: usize, h: usize, x: usize, y: usize) -> bool {
    match scene {
        Scene::Step => x < w / 2,
        Scene::Square => {
            let side = h / 2;
            let (x0, y0) = ((w - side) / 2, (h - side) / 2);
            (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y)
        }
    }
}

/// Renders a scene of `w x h` pixels; identical seeds give identical scenes.
pub fn generate(scene: Scene, w: usize, h: usize, seed: u64) -> Result<SyntheticScene> {
    if w < 4 * FOREGROUND_DISPARITY || h < 4 {
        return Err(Error::Config(format!("scene size {w}x{h} is too small")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pad = FOREGROUND_DISPARITY;
    let cells = [16, 8, 4];
    let fg_tex = Texture::new(&mut rng, w + pad, h, &cells);
    let bg_tex = Texture::new(&mut rng, w + pad, h, &cells);
    let shade = |t: &Texture, (lo, hi): (f32, f32), x: usize, y: usize| (lo + (hi - lo) * t.sample(x, y)).round();

    let mut left = vec![0f32; w * h];
    let mut right = vec![0f32; w * h];
    let mut gt = vec![0f32; w * h];
    let mut foreground = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let fg = in_foreground(scene, w, h, x, y);
            foreground[i] = fg;
            left[i] = if fg {
                shade(&fg_tex, FOREGROUND_RANGE, x, y)
            } else {
                shade(&bg_tex, BACKGROUND_RANGE, x, y)
            };
            gt[i] = if fg { FOREGROUND_DISPARITY } else { BACKGROUND_DISPARITY } as f32;

            // the right view at x sees the left-image point x + d
            let xf = x + FOREGROUND_DISPARITY;
            right[i] = if xf < w && in_foreground(scene, w, h, xf, y) {
                shade(&fg_tex, FOREGROUND_RANGE, xf, y)
            } else {
                shade(&bg_tex, BACKGROUND_RANGE, x + BACKGROUND_DISPARITY, y)
            };
        }
    }
    Ok(SyntheticScene {
        left: Image::from_gray(w, h, left)?,
        right: Image::from_gray(w, h, right)?,
        gt: DisparityMap::from_raw(w, h, gt)?,
        foreground,
    })
}

