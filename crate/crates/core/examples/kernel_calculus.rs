//! Hyperbolic kernel calculus on a random symmetric pair kernel `k`:
//! `sh(k)`, `ch(k)`, the group identities, double angles and the inverse map.

use bosonpair::kernel::{self, sh_ch_by_doubling, sh_ch_of};
use bosonpair::linalg::ONE;
use bosonpair::random::random_pair_kernel;

fn main() -> bosonpair::Result<()> {
    let n = 32;
    let dx = 10.0 / n as f64;
    for size in [0.1, 0.5, 1.0, 2.0] {
        let k = random_pair_kernel(n, dx, size, 7);
        let (sh, ch) = sh_ch_of(&k)?;
        let cc = ch.compose(&ch);
        let group = (&cc.part - &sh.conj().compose(&sh)).max_abs().max((cc.delta - ONE).norm());
        let swap = (&ch.compose_left(&sh.conj()) - &ch.conj().compose_right(&sh.conj())).max_abs();
        let (s2, p2) = kernel::double_angle(&sh, &ch)?;
        let (sh2, ch2) = sh_ch_of(&k.scale(2.0))?;
        let doubling = (&s2 - &sh2).max_abs().max((&p2 - &ch2.part).max_abs());
        let back = (&kernel::recover_k(&sh)? - &k).hs_norm();
        let min_diag = ch.part.diagonal().iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        println!(
            "‖k‖ = {size:<4} ‖sh‖ = {:.4}  Tr p = {:.4}  group {group:.1e}  swap {swap:.1e}  doubling {doubling:.1e}  recover {back:.1e}  min p(x,x) {min_diag:.2e}",
            sh.hs_norm(),
            ch.part.trace().re
        );
    }

    // Large kernels go through halving and the double-angle recursion.
    let k = random_pair_kernel(n, dx, 6.0, 7);
    let (sh, ch) = sh_ch_by_doubling(&k)?;
    let cc = ch.compose(&ch);
    println!("‖k‖ = 6 via doubling: ‖sh‖ = {:.4e}, group residual {:.1e} (relative)",
        sh.hs_norm(),
        (&cc.part - &sh.conj().compose(&sh)).max_abs() / (1.0 + sh.max_abs().powi(2)));
    Ok(())
}
