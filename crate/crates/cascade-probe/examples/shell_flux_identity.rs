//! The flux into a shell `A(x0, R1, R2)` equals the flux into the outer ball
//! `B(x0, R1)` minus the flux into the inner ball `B(x0, R2/2)`.
//!
//! `cargo run --release --example shell_flux_identity`

use cascade_probe::cutoffs::{make_ball_cutoff, make_shell_cutoff, make_time_cutoff, BoundaryMode, Frame};
use cascade_probe::flux_analysis::flux_enstrophy;
use cascade_probe::nse_solver::{run, synthesize_initial_vorticity, InitialSpectrum, SolverConfig};
use cascade_probe::Result;

fn main() -> Result<()> {
    let cfg = SolverConfig {
        nu: 0.05,
        dt: 0.005,
        n: 64,
        l: 2.0 * std::f64::consts::PI,
        t_end: 1.0,
        sample_stride: 40,
        dealias: 2.0 / 3.0,
    };
    let spec = InitialSpectrum { k_peak: 5.0, bandwidth: 2.0, amplitude: 8.0, seed: 9 };
    let traj = run(&cfg, &synthesize_initial_vorticity(&spec, &cfg.grid()?)?)?;
    let frame = Frame::new(cfg.grid()?, 0.9, make_time_cutoff(0.5, 0.75)?)?;
    for (x0, r1, r2) in [([0.0, 0.0], 0.9, 0.4), ([0.1, -0.2], 0.6, 0.5), ([-0.2, 0.1], 0.5, 0.4)] {
        let shell = flux_enstrophy(&traj, &make_shell_cutoff(&frame, x0, r1, r2, BoundaryMode::Cone)?)?;
        let outer = flux_enstrophy(&traj, &make_ball_cutoff(&frame, x0, r1, BoundaryMode::Cone)?)?;
        let inner = flux_enstrophy(&traj, &make_ball_cutoff(&frame, x0, r2 / 2.0, BoundaryMode::Cone)?)?;
        let worst = shell
            .values
            .iter()
            .zip(outer.values.iter().zip(&inner.values))
            .map(|(s, (o, i))| (s - (o - i)).abs() / s.abs().max(o.abs()).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        println!("shell x0 = {x0:?}, R1 = {r1}, R2 = {r2}: worst relative mismatch {worst:.2e}");
    }
    Ok(())
}
