//! Write the synthetic step and square scenes (left, right, ground truth)
//! to a directory, as the test fixtures were produced.
//!
//!     cargo run --example synth_scenes -- out_dir

use cubg::imageio::{write_pfm, write_pnm};
use cubg::pipeline::synth::{generate, Scene};

fn main() -> cubg::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("cubg-scenes"), Into::into);
    for (name, scene) in [("step", Scene::Step), ("square", Scene::Square)] {
        let s = generate(scene, 480, 270, 1)?;
        let dir = out.join(name);
        std::fs::create_dir_all(&dir)?;
        write_pnm(dir.join("left.pgm"), &s.left)?;
        write_pnm(dir.join("right.pgm"), &s.right)?;
        write_pfm(dir.join("gt.pfm"), &s.gt)?;
        let fg = s.foreground.iter().filter(|&&f| f).count();
        println!("{}: {} foreground pixels of {}", dir.display(), fg, s.foreground.len());
    }
    Ok(())
}
