//! Evaluates every cascade and locality bound on a shipped preset and prints
//! the measured hypotheses next to the thresholds they must beat.
//!
//! `cargo run --release --example cascade_verdicts -- [preset]`

use cascade_probe::cascade_verdicts::evaluate_all;
use cascade_probe::cli::{simulate, RunConfig};
use cascade_probe::flux_analysis::analyze;
use cascade_probe::Result;

fn main() -> Result<()> {
    let preset = std::env::args().nth(1).unwrap_or_else(|| "direct".into());
    let cfg = RunConfig::preset(&preset)?;
    let traj = simulate(&cfg, true)?;
    let rep = analyze(&traj, &cfg.analysis)?;
    let suite = evaluate_all(&rep, &cfg.params())?;
    for r in &suite.reports {
        let (ev, ok) = r.tally();
        println!("{:<34} {:?}: {ok}/{ev} evaluated checks hold", r.theorem, r.verdict);
        for c in r.conditions.iter().filter(|c| c.name != "unconditional") {
            let lhs = c.lhs.map_or("undefined".into(), |v| format!("{v:.4e}"));
            println!("    {:<60} {lhs} vs {:.4e} -> {}", c.name, c.rhs, c.holds);
        }
    }
    println!("exit code {}", suite.exit_code);
    Ok(())
}
