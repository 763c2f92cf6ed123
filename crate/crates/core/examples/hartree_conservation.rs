//! Strang-split Hartree flow: conserved quantities, second-order energy drift
//! and the interaction Morawetz functional `Q(t)`.
//!
//! `cargo run --release --example hartree_conservation -- [t_end]`

use std::f64::consts::PI;
use std::sync::Arc;

use bosonpair::grid::Grid;
use bosonpair::hartree::{self, gaussian_packet, scaled_potential, HartreeState, Profile, DEFAULT_MORAWETZ_BUDGET};

fn state(grid: &Grid) -> bosonpair::Result<HartreeState> {
    let pot = scaled_potential(Profile::Gaussian { width: 1.0, height: 1.0 }, grid, 1.0, 0.0)?;
    let phi = gaussian_packet(grid, 1.0, [20.0, 0.0, 0.0], [3.0 * 2.0 * PI / 40.0, 0.0, 0.0], 2.0);
    HartreeState::new(phi, Arc::new(pot))
}

fn main() -> bosonpair::Result<()> {
    let t_end: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10.0);
    let grid = Grid::new(1, 256, 40.0)?;

    let mut s = state(&grid)?;
    let c0 = s.conserved();
    println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "t", "Δmass", "Δenergy", "Δmomentum", "Q(t)");
    let dt = 1e-3;
    let chunks = 10;
    let per = (t_end / dt / chunks as f64).round() as usize;
    for i in 0..=chunks {
        if i > 0 {
            s.advance(dt, per)?;
        }
        let c = s.conserved();
        let q = hartree::morawetz_q(&s, DEFAULT_MORAWETZ_BUDGET)?;
        println!(
            "{:>6.2} {:>12.2e} {:>12.2e} {:>12.2e} {:>12.5}",
            s.t,
            c.mass - c0.mass,
            c.energy - c0.energy,
            c.momentum[0] - c0.momentum[0],
            q
        );
    }

    // Energy drift at T = 1 for a ladder of step sizes.
    println!("\n{:>8} {:>12} {:>8}", "dt", "|ΔE|", "ratio");
    let mut prev: Option<f64> = None;
    for dt in [0.04, 0.02, 0.01, 0.005] {
        let mut s = state(&grid)?;
        let e0 = s.conserved().energy;
        s.advance(dt, (1.0 / dt).round() as usize)?;
        let drift = (s.conserved().energy - e0).abs();
        let ratio = prev.map(|p| p / drift).unwrap_or(f64::NAN);
        println!("{dt:>8} {drift:>12.3e} {ratio:>8.2}");
        prev = Some(drift);
    }
    Ok(())
}
