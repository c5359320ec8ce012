//! Runs the solver on the Taylor-Green vortex and compares with the exact decay.
//!
//! `cargo run --release --example taylor_green_oracle`

use cascade_probe::nse_solver::{run, taylor_green_snapshot, SolverConfig};
use cascade_probe::Result;

fn main() -> Result<()> {
    let cfg = SolverConfig {
        nu: 0.01,
        dt: 1e-3,
        n: 64,
        l: 2.0 * std::f64::consts::PI,
        t_end: 1.0,
        sample_stride: 100,
        dealias: 2.0 / 3.0,
    };
    let grid = cfg.grid()?;
    let start = std::time::Instant::now();
    let traj = run(&cfg, &taylor_green_snapshot(cfg.nu, 0.0, &grid)?.omega)?;
    let elapsed = start.elapsed();
    println!("{:>6} {:>14}", "t", "rel L_inf err");
    for s in &traj.snapshots {
        let exact = taylor_green_snapshot(cfg.nu, s.t, &grid)?;
        let err = s.omega.max_abs_diff(&exact.omega)? / exact.omega.max_abs();
        println!("{:>6.2} {:>14.3e}", s.t, err);
    }
    println!("wall time {:.2?}", elapsed);
    Ok(())
}
