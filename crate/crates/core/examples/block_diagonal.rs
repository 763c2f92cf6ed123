//! Galerkin pair dynamics on the lowest Fourier modes: the conjugated
//! generator is block diagonal (no `a a` / `a* a*` part) up to the
//! time-stepping error, which should shrink like `dt²`.

use std::f64::consts::PI;
use std::sync::Arc;

use bosonpair::grid::Grid;
use bosonpair::hartree::{gaussian_packet, scaled_potential, HartreeState, Profile};
use bosonpair::modes::{self, ModeBasis};

fn main() -> bosonpair::Result<()> {
    let grid = Grid::new(1, 16, 8.0)?;
    let pot = scaled_potential(Profile::Gaussian { width: 1.0, height: 1.0 }, &grid, 16.0, 0.0)?;
    let phi = gaussian_packet(&grid, 1.0, [4.0, 0.0, 0.0], [2.0 * PI / 8.0, 0.0, 0.0], 1.2);
    let h = HartreeState::new(phi, Arc::new(pot))?;
    let basis = ModeBasis::lowest(&grid, 2)?;
    let mut prev: Option<f64> = None;
    for dt in [0.08, 0.04, 0.02, 0.01] {
        let p = modes::block_diag_check(&basis, &h, dt, 0.4)?;
        let order = prev.map(|r| (r / p.residual).log2()).unwrap_or(f64::NAN);
        println!("dt {dt:<5} residual {:.3e}  floor {:.1e}  order {order:.2}", p.residual, p.noise_floor);
        prev = Some(p.residual);
    }
    Ok(())
}
