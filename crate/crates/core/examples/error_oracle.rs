//! Grid-evaluated error vector `E|0⟩` against a dense truncated-Fock
//! computation on the lowest three plane-wave modes, for a pair kernel
//! taken from a short pair run and projected onto those modes.
//!
//! `cargo run --release --example error_oracle -- [cap]`

use std::f64::consts::PI;
use std::sync::Arc;

use bosonpair::error_terms::dense_comparison;
use bosonpair::grid::Grid;
use bosonpair::hartree::{gaussian_packet, scaled_potential, HartreeState, Profile};
use bosonpair::kernel;
use bosonpair::modes::ModeBasis;
use bosonpair::pair::PairRun;

fn main() -> bosonpair::Result<()> {
    let cap: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(24);
    let grid = Grid::new(1, 16, 8.0)?;
    let pot = scaled_potential(Profile::Gaussian { width: 1.0, height: 1.0 }, &grid, 16.0, 0.0)?;
    let phi = gaussian_packet(&grid, 0.6, [4.0, 0.0, 0.0], [2.0 * PI / 8.0, 0.0, 0.0], 1.2);
    let mut run = PairRun::new(HartreeState::new(phi, Arc::new(pot.clone()))?, false);
    run.advance(0.01, 50)?;
    let k = kernel::recover_k(&run.state.s2)?.scale(0.5);
    let basis = ModeBasis::lowest(&grid, 3)?;
    let k_modes = basis.pair_coefficients(&k)?;
    println!("‖k‖_HS = {:.4}, mode block norm {:.4}", k.hs_norm(), k_modes.norm());
    let c = dense_comparison(&basis, &k_modes, &run.state.hartree.phi, &pot.scaled, 16.0, cap)?;
    println!("sector  {:>14} {:>14}", "grid", "dense");
    for j in 0..5 {
        println!("{j:>6}  {:>14.8e} {:>14.8e}", c.grid_sectors[j], c.dense_sectors[j]);
    }
    println!("‖E|0⟩‖ grid {:.10e}  dense {:.10e}", c.grid_total, c.dense_total);
    println!("max component difference {:.2e}, leakage into sectors 5..{} {:.2e}", c.max_component_diff, cap / 2, c.leakage);
    Ok(())
}
