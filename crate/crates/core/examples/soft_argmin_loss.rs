//! Soft argmin regression, its temperature, and the smooth L1 loss with
//! gradients flowing back into the cost volume.
//!
//!     cargo run --example soft_argmin_loss

use cubg::regress::{smooth_l1_backward, smooth_l1_loss, soft_argmin, soft_argmin_backward, Reduction, SoftArgminConfig};
use cubg::{CostVolume, DenseArray, DisparityMap, Polarity};

fn main() -> cubg::Result<()> {
    // one pixel, eight levels, minimum at 5 with a runner-up at 2
    let costs = vec![3.0, 2.6, 0.9, 2.0, 1.4, 0.4, 1.6, 2.4];
    let vol = CostVolume::new(DenseArray::from_vec(&[1, 1, 8], costs)?, Polarity::Cost)?;

    for tau in [4.0, 1.0, 0.25, 0.05] {
        let d = soft_argmin(&vol, &SoftArgminConfig::new(tau)?)?;
        println!("tau {tau:5}: disparity {:.4}", d.values()[0]);
    }

    let cfg = SoftArgminConfig::new(0.25)?;
    let pred = soft_argmin(&vol, &cfg)?;
    let gt = DisparityMap::all_valid(DenseArray::full(&[1, 1], 5.0)?)?;
    let loss = smooth_l1_loss(&pred, &gt)?;
    let dpred = smooth_l1_backward(&pred, &gt, Reduction::Mean)?;
    let dcost = soft_argmin_backward(&vol, &cfg, &dpred)?;
    println!("prediction {:.4}, loss {loss:.5}, dL/dd {:+.4}", pred.values()[0], dpred.data()[0]);
    println!("dL/dcost: {:?}", dcost.data().iter().map(|v| format!("{v:+.3}")).collect::<Vec<_>>());

    // a similarity volume is read the other way round
    let scores = vol.array().map(|c| -c);
    let sim = CostVolume::new(scores, Polarity::Similarity)?;
    println!("same volume as similarity: {:.4}", soft_argmin(&sim, &cfg)?.values()[0]);
    Ok(())
}
