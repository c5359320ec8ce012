//! Ball and shell coverings of the analysis disk with their measured count
//! ratio `K1` and multiplicity `K2`, plus the outer pair.
//!
//! `cargo run --release --example coverings`

use cascade_probe::coverings::{make_ball_covering, make_outer_pair, make_shell_covering, validate_covering};
use cascade_probe::spectral_field::Grid2D;
use cascade_probe::Result;

fn main() -> Result<()> {
    let r0 = 0.7;
    let grid = Grid2D::new(512, 2.0 * std::f64::consts::PI)?;
    println!("{:<7} {:>8} {:>6} {:>7} {:>4} {:>7}", "family", "R0/R", "n", "K1", "K2", "covers");
    for q in [1.0, 2.0, 4.0, 8.0] {
        let c = make_ball_covering(r0, r0 / q)?;
        let v = validate_covering(&c, &grid)?;
        println!("{:<7} {:>8} {:>6} {:>7.3} {:>4} {:>7}", "balls", q, c.n, v.k1, v.k2, v.covers);
    }
    for q in [2.0, 4.0, 8.0] {
        let c = make_shell_covering(r0, r0 / q)?;
        let v = validate_covering(&c, &grid)?;
        println!("{:<7} {:>8} {:>6} {:>7.3} {:>4} {:>7}", "shells", q, c.n, v.k1, v.k2, v.covers);
    }
    let d = grid.l() / 2f64.sqrt();
    let pair = make_outer_pair(d, 1.0, r0)?;
    println!("outer pair at R = 1: centers {:?}, D = {:.4}", pair.centers, d);
    Ok(())
}
