//! Localized energy and enstrophy balances for ball cutoffs on a random
//! trajectory: time derivative, diffusion and flux terms against the dissipation.
//!
//! `cargo run --release --example local_balances -- [oversample]`

use cascade_probe::cutoffs::{make_ball_cutoff, make_time_cutoff, BoundaryMode, Frame};
use cascade_probe::flux_analysis::{balance_residual, Balance};
use cascade_probe::nse_solver::{run, synthesize_initial_vorticity, InitialSpectrum, SolverConfig};
use cascade_probe::spectral_field::Grid2D;
use cascade_probe::Result;

fn main() -> Result<()> {
    let q: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2);
    let cfg = SolverConfig {
        nu: 0.05,
        dt: 0.00245,
        n: 128,
        l: 2.0 * std::f64::consts::PI,
        t_end: 19.6,
        sample_stride: 32,
        dealias: 2.0 / 3.0,
    };
    let spec = InitialSpectrum { k_peak: 8.0, bandwidth: 2.0, amplitude: 15.0, seed: 3 };
    let traj = run(&cfg, &synthesize_initial_vorticity(&spec, &cfg.grid()?)?)?;
    // analysis on a finer grid so that narrow cutoffs are resolved
    let grid = Grid2D::new(q * cfg.n, cfg.l)?;
    let frame = Frame::new(grid, 0.7, make_time_cutoff(9.8, 0.75)?)?;
    println!("{:<18} {:>6} {:>12} {:>12} {:>12} {:>12} {:>10}", "center", "R", "balance", "dissipation", "time", "diffusion", "relative");
    for (x0, r) in [([0.0, 0.0], 0.7), ([0.2, -0.1], 0.35), ([-0.3, 0.25], 0.35), ([0.5, 0.3], 0.175)] {
        let c = make_ball_cutoff(&frame, x0, r, BoundaryMode::Cone)?;
        for (name, which) in [("energy", Balance::Energy), ("enstrophy", Balance::Enstrophy)] {
            let b = balance_residual(&traj, &c, which)?;
            println!(
                "{:<18} {:>6} {:>12} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.2e}",
                format!("{x0:?}"),
                r,
                name,
                b.dissipation,
                b.time_term,
                b.diffusion_term,
                b.relative
            );
        }
    }
    Ok(())
}
