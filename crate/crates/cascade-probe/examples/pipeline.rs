//! The simulate, analyze, verify and report stages driven from a run
//! configuration, writing every artifact into a run directory.
//!
//! `cargo run --release --example pipeline -- [preset] [run_dir]`

use std::path::PathBuf;

use cascade_probe::cli::{report_run, simulate_to_dir, RunConfig};
use cascade_probe::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let preset = args.next().unwrap_or_else(|| "taylor-green".into());
    let dir = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join(format!("cascade-{preset}")));
    let mut cfg = RunConfig::preset(&preset)?;
    cfg.output_dir = dir.clone();
    simulate_to_dir(&cfg, &dir, true)?;
    let (summary, code) = report_run(&cfg, &dir)?;
    print!("{summary}");
    println!("artifacts in {} (exit code {code})", dir.display());
    Ok(())
}
