//! Compare the analytic slice gradients against central finite differences
//! on a tiny random instance.
//!
//!     cargo run --example gradient_check

use cubg::grid::{slice_backward, slice_forward};
use cubg::{BilateralGrid, DenseArray, GuidanceMap, Polarity, SliceParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// L = sum(slice(B, G) * R), evaluated in f64
fn objective(grid: &BilateralGrid, guide: &GuidanceMap, p: &SliceParams, r: &DenseArray) -> f64 {
    let out = slice_forward(grid, guide, p).unwrap();
    out.values().iter().zip(r.data()).map(|(&a, &b)| a as f64 * b as f64).sum()
}

fn main() -> cubg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let shape = [3, 3, 4, 5];
    let n: usize = shape.iter().product();
    let b = DenseArray::from_vec(&shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let grid = BilateralGrid::new(b, Polarity::Cost)?;
    let p = SliceParams::new(6, 5, 4);
    // keep guidance off the bin knots (g * 4 never near an integer)
    let g: Vec<f32> = (0..30).map(|_| (rng.gen_range(0..4) as f32 + rng.gen_range(0.2..0.8)) / 4.0).collect();
    let guide = GuidanceMap::new(DenseArray::from_vec(&[5, 6], g)?)?;
    let r = DenseArray::from_vec(&[5, 6, 4], (0..120).map(|_| rng.gen_range(0.5..1.5)).collect())?;

    let grads = slice_backward(&grid, &guide, &p, &r)?;
    let h = 1e-3;

    println!("grid entries:");
    for k in [0, 17, 95, n - 1] {
        let bump = |delta: f64| {
            let mut b = grid.array().clone();
            b.data_mut()[k] += delta as f32;
            objective(&BilateralGrid::new(b, Polarity::Cost).unwrap(), &guide, &p, &r)
        };
        let fd = (bump(h) - bump(-h)) / (2.0 * h);
        println!("  dB[{k:3}] analytic {:+.5}  finite diff {fd:+.5}", grads.grid.data()[k]);
    }
    println!("guidance pixels:");
    for k in [0, 11, 29] {
        let bump = |delta: f64| {
            let mut g = guide.array().clone();
            g.data_mut()[k] += delta as f32;
            objective(&grid, &GuidanceMap::new(g).unwrap(), &p, &r)
        };
        let fd = (bump(h) - bump(-h)) / (2.0 * h);
        println!("  dG[{k:3}] analytic {:+.5}  finite diff {fd:+.5}", grads.guidance.data()[k]);
    }

    let dot_out: f64 = r.data().iter().zip(slice_forward(&grid, &guide, &p)?.values()).map(|(&a, &b)| a as f64 * b as f64).sum();
    let dot_in = grid.array().dot(&grads.grid)?;
    println!("adjoint: <slice(B), R> = {dot_out:.6}, <B, dB> = {dot_in:.6}");
    Ok(())
}
