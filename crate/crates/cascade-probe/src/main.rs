use clap::Parser;

use cascade_probe::cli::{execute, Cli};

fn main() {
    if let Some(n) = std::env::var("CASCADE_PROBE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("warning: could not cap threads: {e}");
        }
    }
    let code = match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    };
    std::process::exit(code);
}
