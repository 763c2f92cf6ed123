//! Truncated Fock space: the quadratic map `L ↦ I(L)` is a Lie algebra
//! homomorphism on the sub-cap subspace, and `e^{B(k)}` implements the
//! Bogoliubov rotation of `a, a*`.

use num_complex::Complex64;

use bosonpair::fock::{self, SymplecticBlock, TruncatedFock};
use bosonpair::linalg::CMat;
use bosonpair::random::rng;

fn main() -> bosonpair::Result<()> {
    let space = TruncatedFock::new(3, 6)?;
    println!("3 modes, cap 6: dimension {}", space.dim());
    let mut r = rng(11);
    for i in 0..5 {
        let (a, b) = (SymplecticBlock::random(3, &mut r), SymplecticBlock::random(3, &mut r));
        println!("  pair {i}: ‖[I(L₁),I(L₂)] − I([L₁,L₂])‖ = {:.2e}", fock::check_isomorphism(&space, &a, &b)?);
    }

    let one_mode = TruncatedFock::new(1, 20)?;
    for theta in [0.1, 0.2, 0.5] {
        let rep = fock::bogoliubov(&one_mode, &CMat::from_element(1, 1, Complex64::new(theta, 0.0)))?;
        println!(
            "θ = {theta}: residual {:.2e}, unitarity {:.2e}, compared on totals ≤ {} with {} padding levels{}",
            rep.residual,
            rep.unitarity,
            rep.level,
            rep.padding,
            if rep.truncation_dominated { " (truncation dominated)" } else { "" }
        );
    }
    Ok(())
}
