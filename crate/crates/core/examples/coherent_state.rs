//! Weyl-operator coherent state `e^{−√N A(φ)}|0⟩` in one mode, against the
//! Poisson sector weights.

use num_complex::Complex64;

use bosonpair::fock::{self, TruncatedFock};

fn main() -> bosonpair::Result<()> {
    let n = 4.0;
    for cap in [8, 16, 24] {
        let space = TruncatedFock::new(1, cap)?;
        let c = fock::coherent(&space, &[Complex64::new(1.0, 0.0)], n)?;
        let worst = c
            .sector_weights
            .iter()
            .enumerate()
            .map(|(j, w)| (w - fock::coherent_weight(n, j)).abs())
            .fold(0.0, f64::max);
        println!("cap {cap:>2}: max sector-weight error {worst:.2e}, Poisson tail {:.2e}, truncated {}", c.truncation_tail, c.truncated);
    }
    Ok(())
}
