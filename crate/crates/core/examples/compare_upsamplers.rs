//! Grid slicing against trilinear upsampling on the synthetic scenes, split
//! into pixels near disparity edges and flat regions.
//!
//!     cargo run --example compare_upsamplers

use cubg::pipeline::synth::{generate, Scene};
use cubg::pipeline::{upsample_compare, PipelineConfig};

fn main() -> cubg::Result<()> {
    let cfg = PipelineConfig::default();
    println!("scene    upsampler  EPE     EPE-edge  EPE-flat  bad-3");
    for scene in [Scene::Step, Scene::Square] {
        let s = generate(scene, 480, 270, 1)?;
        let c = upsample_compare(&s.left, &s.right, &s.gt, &cfg)?;
        for (name, r) in [("grid", &c.cubg), ("linear", &c.linear)] {
            println!(
                "{:<8} {name:<10} {:<7.3} {:<9.3} {:<9.3} {:.2}%",
                format!("{scene:?}"),
                r.epe,
                r.epe_edge,
                r.epe_flat,
                r.bad_3
            );
        }
        let d = c.delta();
        println!("         delta      {:+.3}  {:+.3}    {:+.3}", d.epe, d.epe_edge, d.epe_flat);
    }
    Ok(())
}
