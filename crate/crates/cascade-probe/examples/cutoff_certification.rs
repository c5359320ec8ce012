//! Builds the refined cutoffs of one analysis frame and certifies each on the
//! grid: support, plateau, domination by the disk cutoff, cone conditions and
//! the ratio constants `C0`.
//!
//! `cargo run --release --example cutoff_certification`

use cascade_probe::cutoffs::{
    make_ball_cutoff, make_domain_cutoff, make_outer_cutoff, make_shell_cutoff, make_time_cutoff, validate_cutoff,
    BoundaryMode, Cutoff, Frame,
};
use cascade_probe::spectral_field::Grid2D;
use cascade_probe::Result;

fn main() -> Result<()> {
    let grid = Grid2D::new(256, 2.0 * std::f64::consts::PI)?;
    let tc = make_time_cutoff(9.8, 0.75)?;
    println!("time cutoff: C_time = {:.3}", tc.c_time);
    let frame = Frame::new(grid, 0.7, tc)?;
    let cutoffs: Vec<(&str, Cutoff)> = vec![
        ("disk", make_domain_cutoff(&frame)),
        ("interior ball", make_ball_cutoff(&frame, [0.1, -0.1], 0.35, BoundaryMode::Cone)?),
        ("boundary ball (cone)", make_ball_cutoff(&frame, [0.6, 0.0], 0.175, BoundaryMode::Cone)?),
        ("boundary ball (plain)", make_ball_cutoff(&frame, [0.6, 0.0], 0.175, BoundaryMode::Plain)?),
        ("shell", make_shell_cutoff(&frame, [0.0, 0.0], 0.35, 0.175, BoundaryMode::Cone)?),
        ("outer", make_outer_cutoff(&frame, [0.0, 0.0], 1.0)?),
    ];
    println!(
        "{:<22} {:>6} {:>8} {:>8} {:>6} {:>9} {:>9} {:>9}",
        "cutoff", "supp", "plateau", "<= psi0", "cone", "C0_grad", "C0_lap", "C0_lap*8"
    );
    for (name, c) in &cutoffs {
        let v = validate_cutoff(c, &grid)?;
        let refined = c.measure_c0(8);
        let cone = v.cone_ok.map_or("-".to_string(), |b| b.to_string());
        println!(
            "{:<22} {:>6} {:>8} {:>8} {:>6} {:>9.2} {:>9.2} {:>9.2}",
            name, v.support_ok, v.plateau_ok, v.below_domain_ok, cone, v.c0_grad, v.c0_lap, refined.lap_ratio
        );
    }
    Ok(())
}
