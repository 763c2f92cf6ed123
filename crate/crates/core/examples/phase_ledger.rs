//! Phase functions along a pair run: `μ₀`, the four
//! pieces of `μ₁`, and the accumulated phase `χ = ∫(μ₀ + μ₁/N)`.

use std::f64::consts::PI;
use std::sync::Arc;

use bosonpair::error_terms::{self, PhaseLedger};
use bosonpair::grid::Grid;
use bosonpair::hartree::{gaussian_packet, scaled_potential, HartreeState, Profile};
use bosonpair::kernel;
use bosonpair::pair::PairRun;

fn main() -> bosonpair::Result<()> {
    let n_particles = 32.0;
    let grid = Grid::new(1, 32, 10.0)?;
    let pot = scaled_potential(Profile::Gaussian { width: 1.0, height: 1.0 }, &grid, n_particles, 0.0)?;
    let v = pot.scaled.clone();
    let phi = gaussian_packet(&grid, 0.5, [5.0, 0.0, 0.0], [2.0 * PI / 10.0, 0.0, 0.0], 1.5);
    let mut run = PairRun::new(HartreeState::new(phi, Arc::new(pot))?, false);

    let mu = |run: &PairRun| -> bosonpair::Result<(f64, error_terms::Mu1)> {
        let k = kernel::recover_k(&run.state.s2)?.scale(0.5);
        let (sh, ch) = kernel::sh_ch_of(&k)?;
        let m = run.current_m()?;
        Ok((error_terms::mu0(&run.state.hartree.phi, &v)?, error_terms::mu1(&sh, &ch, &m, &v, n_particles)?))
    };

    let dt = 0.01;
    let (m0, m1) = mu(&run)?;
    let mut ledger = PhaseLedger::start(m0, m1.total);
    println!("{:>5} {:>10} {:>11} {:>11} {:>11} {:>11} {:>11} {:>10}", "t", "μ₀", "trace", "sh·sh off", "sh·sh diag", "sh·ch", "μ₁", "χ");
    for i in 0..=10 {
        let (m0, m1) = if i == 0 {
            (m0, m1)
        } else {
            run.advance(dt, 10)?;
            let (m0, m1) = mu(&run)?;
            // Trapezoid over the whole 10-step chunk.
            ledger.accumulate(m0, m1.total, n_particles, 10.0 * dt);
            (m0, m1)
        };
        println!(
            "{:>5.2} {m0:>10.6} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e} {:>10.6}",
            run.state.t, m1.trace_term, m1.shsh_offdiag, m1.shsh_diag, m1.shch, m1.total, ledger.chi
        );
    }
    Ok(())
}
