//! Spectral operators on the periodic box: velocity recovery, pressure and
//! band-limited resampling.
//!
//! `cargo run --release --example spectral_fields`

use cascade_probe::spectral_field::{
    curl, divergence, resample, solve_pressure, velocity_from_vorticity, Grid2D, ScalarField2D,
};
use cascade_probe::Result;

fn main() -> Result<()> {
    let grid = Grid2D::new(64, 2.0 * std::f64::consts::PI)?;
    let w = ScalarField2D::from_fn(grid, |x, y| 2.0 * x.sin() * y.sin() + 0.3 * (3.0 * x + 2.0 * y).cos())?;
    let u = velocity_from_vorticity(&w)?;
    println!("max |curl u - w|   {:.3e}", curl(&u)?.max_abs_diff(&w)?);
    println!("max |div u|        {:.3e}", divergence(&u)?.max_abs());
    let p = solve_pressure(&u, 0.01)?;
    println!("pressure mean      {:.3e}, max |p| {:.4}", p.mean(), p.max_abs());
    let fine = resample(&w, 256)?;
    let exact = ScalarField2D::from_fn(*fine.grid(), |x, y| 2.0 * x.sin() * y.sin() + 0.3 * (3.0 * x + 2.0 * y).cos())?;
    println!("resample 64 -> 256 max error {:.3e}", fine.max_abs_diff(&exact)?);
    Ok(())
}
