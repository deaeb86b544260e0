//! Command-line front end: stereo matching, upsampler comparison, metric
//! evaluation, timing and synthetic scene export.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cubg::imageio::{read_pfm, read_pnm, write_pfm, write_pnm};
use cubg::metrics::{eval_report, REPORT_CSV_HEADER};
use cubg::pipeline::{bench, parse_sizes, run_match, synth, upsample_compare, PipelineConfig, Upsampler, BENCH_CSV_HEADER};
use cubg::{Error, Result};

#[derive(Parser)]
#[command(name = "cubg", version, about = "Edge-aware cost volume upsampling for stereo matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a disparity map for a rectified pair.
    Match {
        #[command(flatten)]
        pair: Pair,
        /// Output disparity (PFM).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunOptions,
    },
    /// Run both upsamplers on one pair and report metrics against ground truth.
    Compare {
        #[command(flatten)]
        pair: Pair,
        #[arg(long)]
        gt: PathBuf,
        /// CSV report path.
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        run: RunOptions,
    },
    /// Score a predicted disparity map.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Report path; `.csv` selects CSV, anything else key = value text.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Time each pipeline stage on synthetic pairs.
    Bench {
        #[arg(long, default_value = "480x270,960x540,1242x375")]
        sizes: String,
        /// Timed runs per size (at least 5), after one warm-up.
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(5..))]
        runs: u64,
        /// CSV output path; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        run: RunOptions,
    },
    /// Write a synthetic scene (left.pgm, right.pgm, gt.pfm).
    Synth {
        #[arg(long)]
        scene: synth::Scene,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 480)]
        width: usize,
        #[arg(long, default_value_t = 270)]
        height: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct Pair {
    #[arg(long)]
    left: PathBuf,
    #[arg(long)]
    right: PathBuf,
}

#[derive(Args)]
struct RunOptions {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    upsampler: Option<Upsampler>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Force reproducible reductions.
    #[arg(long)]
    deterministic: bool,
}

impl RunOptions {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_text(&fs::read_to_string(path)?)?,
            None => PipelineConfig::default(),
        };
        if let Some(u) = self.upsampler {
            cfg.upsampler = u;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if self.deterministic {
            cfg.deterministic = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Match { pair, out, run } => {
            let cfg = run.config()?;
            let (left, right) = (read_pnm(&pair.left)?, read_pnm(&pair.right)?);
            let result = run_match(&left, &right, &cfg)?;
            if !result.disparity.values().iter().all(|v| v.is_finite()) {
                return Err(Error::Numeric("non-finite disparity".into()));
            }
            write_pfm(&out, &result.disparity)?;
            eprintln!("{}: {:.1} ms", out.display(), result.timings.total_ms());
        }
        Command::Compare { pair, gt, report, run } => {
            let cfg = run.config()?;
            let (left, right) = (read_pnm(&pair.left)?, read_pnm(&pair.right)?);
            let gt = read_pfm(&gt)?;
            let cmp = upsample_compare(&left, &right, &gt, &cfg)?;
            write_text(&report, &cmp.to_csv())?;
            let d = cmp.delta();
            println!(
                "epe-edge cubg {:.4} linear {:.4} (delta {:+.4}); epe-flat cubg {:.4} linear {:.4} (delta {:+.4})",
                cmp.cubg.epe_edge, cmp.linear.epe_edge, d.epe_edge, cmp.cubg.epe_flat, cmp.linear.epe_flat, d.epe_flat
            );
        }
        Command::Eval { pred, gt, report } => {
            let r = eval_report(&read_pfm(&pred)?, &read_pfm(&gt)?)?;
            let text = match &report {
                Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => {
                    format!("{REPORT_CSV_HEADER}\n{}\n", r.to_csv_row())
                }
                _ => r.to_key_value(),
            };
            match report {
                Some(p) => write_text(&p, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Bench { sizes, runs, report, run } => {
            let cfg = run.config()?;
            let rows = bench(&cfg, &parse_sizes(&sizes)?, runs as usize)?;
            let mut text = format!("{BENCH_CSV_HEADER}\n");
            for row in &rows {
                text += &row.to_csv_row();
                text.push('\n');
            }
            match report {
                Some(p) => write_text(&p, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Synth { scene, out_dir, width, height, seed } => {
            let s = synth::generate(scene, width, height, seed)?;
            fs::create_dir_all(&out_dir)?;
            write_pnm(out_dir.join("left.pgm"), &s.left)?;
            write_pnm(out_dir.join("right.pgm"), &s.right)?;
            write_pfm(out_dir.join("gt.pfm"), &s.gt)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
