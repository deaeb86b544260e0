//! Lift a coarse cost volume into a bilateral grid and slice it back at
//! full resolution, next to plain trilinear upsampling.
//!
//!     cargo run --example slice_upsample

use cubg::features::{census_cost_volume, census_transform, downsample_guidance, to_luma};
use cubg::grid::{linear_upsample, slice_forward, splat_build, SplatConfig};
use cubg::pipeline::synth::{generate, Scene};
use cubg::regress::{soft_argmin, SoftArgminConfig};
use cubg::SliceParams;

fn main() -> cubg::Result<()> {
    let scene = generate(Scene::Square, 240, 160, 1)?;
    let (factor, levels) = (8, 24);

    let full = to_luma(&scene.left);
    let low_l = downsample_guidance(&full, factor)?;
    let low_r = downsample_guidance(&to_luma(&scene.right), factor)?;
    let cost = census_cost_volume(
        &census_transform(low_l.array(), 5)?,
        &census_transform(low_r.array(), 5)?,
        levels,
    )?;
    println!("low-res cost volume {}x{}x{}", cost.width(), cost.height(), cost.levels());

    let grid = splat_build(&cost, &low_l, &SplatConfig::default())?;
    println!(
        "grid {}x{}x{}x{}",
        grid.width(),
        grid.height(),
        grid.levels(),
        grid.guidance_levels()
    );

    let p = SliceParams::new(full.width(), full.height(), levels);
    let sliced = slice_forward(&grid, &full, &p)?;
    let linear = linear_upsample(&cost, full.width(), full.height(), levels)?;

    // sharp regression, in full-resolution pixels
    let soft = SoftArgminConfig::new(0.05)?;
    let row = full.height() / 2;
    let a = soft_argmin(&sliced, &soft)?;
    let b = soft_argmin(&linear, &soft)?;
    println!("disparity along row {row} across the left edge of the square (gt 2 -> 8):");
    println!("   x   grid  linear  truth");
    let edge = full.width() / 2 - full.height() / 4;
    for x in (edge - 6..edge + 6).step_by(2) {
        let i = row * full.width() + x;
        println!(
            "{x:4} {:6.2} {:7.2} {:6.1}",
            a.values()[i] * factor as f32,
            b.values()[i] * factor as f32,
            scene.gt.values()[i]
        );
    }
    Ok(())
}
