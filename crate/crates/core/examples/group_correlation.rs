//! Group-wise correlation of feature maps, reduced to a cost volume or
//! turned into a grid by a per-level linear map stored in a GRIDW file.
//!
//!     cargo run --example group_correlation

use cubg::features::{groupwise_correlation, reduce_groups, FeatureMap};
use cubg::grid::{convert_linear, read_grid_weights, slice_forward, write_grid_weights, LinearGridWeights};
use cubg::{DenseArray, GuidanceMap, SliceParams};

fn main() -> cubg::Result<()> {
    let (c, h, w, levels, groups) = (8, 6, 10, 4, 4);
    // left features: a ramp per channel; right is the left shifted by 2
    let left: Vec<f32> = (0..c * h * w).map(|i| ((i % w) as f32 * 0.3 + (i / (h * w)) as f32).sin()).collect();
    let mut right = vec![0f32; c * h * w];
    for (i, v) in right.iter_mut().enumerate() {
        let x = i % w;
        *v = if x + 2 < w { left[i + 2] } else { 0.0 };
    }
    let fl = FeatureMap::new(DenseArray::from_vec(&[c, h, w], left)?)?;
    let fr = FeatureMap::new(DenseArray::from_vec(&[c, h, w], right)?)?;

    let gc = groupwise_correlation(&fl, &fr, groups, levels)?;
    let cv = reduce_groups(&gc);
    print!("mean correlation by disparity at (6, 3):");
    for d in 0..levels {
        print!(" {:.3}", cv.get(6, 3, d));
    }
    println!();

    // three guidance levels: emphasise group 0, average, emphasise group 3
    let lw = LinearGridWeights::new(
        3,
        groups,
        vec![1.0, 0.0, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25, 0.0, 0.0, 0.0, 1.0],
        vec![0.0; 3],
    )?;
    let path = std::env::temp_dir().join("cubg-example.gridw");
    write_grid_weights(&path, &lw)?;
    let lw = read_grid_weights(&path)?;
    std::fs::remove_file(&path)?;

    let grid = convert_linear(&gc, &lw)?;
    let guide = GuidanceMap::new(DenseArray::full(&[2 * h, 2 * w], 0.5)?)?;
    let up = slice_forward(&grid, &guide, &SliceParams::new(2 * w, 2 * h, levels))?;
    println!(
        "grid {}x{}x{}x{} sliced to {}x{}x{}",
        grid.width(),
        grid.height(),
        grid.levels(),
        grid.guidance_levels(),
        up.width(),
        up.height(),
        up.levels()
    );
    Ok(())
}
