//! End-to-end matching on a rectified pair. With no arguments a synthetic
//! scene is generated; otherwise pass `LEFT.pgm RIGHT.pgm [OUT.pfm]`.
//!
//!     cargo run --example stereo_match
//!     cargo run --example stereo_match -- left.pgm right.pgm out.pfm

use cubg::imageio::{read_pnm, write_pfm};
use cubg::pipeline::synth::{generate, Scene};
use cubg::pipeline::{masked_median, run_match, PipelineConfig, Upsampler};

fn main() -> cubg::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (left, right, truth) = match args.as_slice() {
        [l, r, ..] => (read_pnm(l)?, read_pnm(r)?, None),
        _ => {
            let s = generate(Scene::Square, 480, 270, 1)?;
            (s.left, s.right, Some(s.gt))
        }
    };

    for upsampler in [Upsampler::Cubg, Upsampler::Linear] {
        let cfg = PipelineConfig { upsampler, ..PipelineConfig::default() };
        let out = run_match(&left, &right, &cfg)?;
        let t = out.timings;
        println!(
            "{upsampler:?}: cost {:.1} ms, aggregate {:.1} ms, grid {:.1} ms, slice {:.1} ms, regress {:.1} ms",
            t.cost_ms, t.aggregate_ms, t.grid_ms, t.slice_ms, t.regress_ms
        );
        if let Some(gt) = &truth {
            let fg = masked_median(&out.disparity, |i| gt.values()[i] == 8.0).unwrap_or(f32::NAN);
            let bg = masked_median(&out.disparity, |i| gt.values()[i] == 2.0).unwrap_or(f32::NAN);
            println!("  median disparity: square {fg:.2} (truth 8), background {bg:.2} (truth 2)");
        }
        if let (Some(path), Upsampler::Cubg) = (args.get(2), upsampler) {
            write_pfm(path, &out.disparity)?;
            println!("  wrote {path}");
        }
    }
    Ok(())
}
