//! Per-stage timings of the matcher on synthetic pairs, at 1 thread and at
//! every available core.
//!
//!     cargo run --release --example bench_stages

use cubg::pipeline::{bench, PipelineConfig, BENCH_CSV_HEADER};

fn main() -> cubg::Result<()> {
    let sizes = [(480, 270), (960, 540)];
    for threads in [1, 0] {
        let cfg = PipelineConfig { threads, ..PipelineConfig::default() };
        println!("threads = {}", if threads == 0 { "all".to_string() } else { threads.to_string() });
        println!("{BENCH_CSV_HEADER}");
        for row in bench(&cfg, &sizes, 5)? {
            println!("{}", row.to_csv_row());
        }
    }
    Ok(())
}
