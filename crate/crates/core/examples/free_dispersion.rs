//! Free Schrödinger evolution of a Gaussian: `sup|φ(t)| ~ t^{-d/2}`.
//! The box is wide enough that the packet never wraps around.

use std::sync::Arc;

use bosonpair::grid::{sup, Grid};
use bosonpair::hartree::{self, gaussian_packet, HartreeState, Potential};

fn main() -> bosonpair::Result<()> {
    let grid = Grid::new(1, 1024, 200.0)?;
    let phi = gaussian_packet(&grid, 1.0, [100.0, 0.0, 0.0], [0.0; 3], 1.0);
    let mut s = HartreeState::new(phi, Arc::new(Potential::zero(&grid)))?;
    let mut series = vec![];
    for t in (1..=20).map(f64::from) {
        s.step(t - s.t)?;
        // i∂ₜφ = −Δφ from e^{−x²/2}: sup|φ(t)| = (1 + 4t²)^{-1/4}.
        let exact = (1.0 + 4.0 * t * t).powf(-0.25);
        println!("t = {t:>4.1}  sup|φ| = {:.6}  exact {exact:.6}", sup(&s.phi));
        series.push((s.t, sup(&s.phi)));
    }
    println!("fitted exponent {:+.4} (expected -0.5)", hartree::decay_fit(&series)?);
    Ok(())
}
