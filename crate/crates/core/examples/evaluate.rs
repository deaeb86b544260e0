//! Score a prediction: EPE, bad-pixel rates, D1 and the edge/flat split
//! derived from the ground truth.
//!
//!     cargo run --example evaluate
//!     cargo run --example evaluate -- pred.pfm gt.pfm

use cubg::imageio::read_pfm;
use cubg::metrics::{edge_flat_partition, eval_report_with_mask};
use cubg::pipeline::synth::{generate, Scene};
use cubg::pipeline::{run_match, PipelineConfig};

fn main() -> cubg::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (pred, gt) = match args.as_slice() {
        [p, g, ..] => (read_pfm(p)?, read_pfm(g)?),
        _ => {
            let s = generate(Scene::Step, 480, 270, 1)?;
            let out = run_match(&s.left, &s.right, &PipelineConfig::default())?;
            (out.disparity, s.gt)
        }
    };

    let mask = edge_flat_partition(&gt)?;
    let (w, h) = (mask.width(), mask.height());
    println!("edge band covers {} of {} pixels", mask.edge_count(), w * h);
    // coarse picture of the band, one character per 8x8 block
    for by in (0..h).step_by(h.div_ceil(12).max(8)) {
        let line: String = (0..w)
            .step_by(8)
            .map(|bx| if mask.is_edge()[by * w + bx] { '#' } else { '.' })
            .collect();
        println!("  {line}");
    }

    let report = eval_report_with_mask(&pred, &gt, &mask)?;
    print!("{}", report.to_key_value());
    println!("weighted edge/flat EPE {:.6}", report.weighted_epe());
    Ok(())
}
