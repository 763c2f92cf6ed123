//! Seeded generators for test inputs. Every random object in the crate is
//! drawn from a `ChaCha8Rng` so that runs are reproducible from one seed.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Field, Grid};
use crate::kernel::Kernel;
use crate::linalg::CMat;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn complex(r: &mut impl Rng) -> Complex64 {
    Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
}

pub fn random_field(grid: &Grid, seed: u64) -> Field {
    let mut r = rng(seed);
    Field { grid: grid.clone(), values: (0..grid.len()).map(|_| complex(&mut r)).collect() }
}

pub fn random_matrix(n: usize, r: &mut impl Rng) -> CMat {
    CMat::from_fn(n, n, |_, _| complex(r))
}

pub fn random_symmetric(n: usize, r: &mut impl Rng) -> CMat {
    let a = random_matrix(n, r);
    (&a + a.transpose()) * Complex64::new(0.5, 0.0)
}

/// Random symmetric pair kernel with HS norm `size` (zero when `size = 0`).
pub fn random_pair_kernel(n: usize, weight: f64, size: f64, seed: u64) -> Kernel {
    let k = Kernel::new(random_symmetric(n, &mut rng(seed)), weight);
    k.scale(size / k.hs_norm())
}

/// Smooth random field: a few low Fourier modes with random amplitudes.
pub fn smooth_field(grid: &Grid, modes: usize, seed: u64) -> Field {
    let mut r = rng(seed);
    let mut coeffs = Field::zeros(grid);
    for i in 0..grid.len() {
        let c = grid.coords(i);
        if (0..grid.dim()).all(|a| grid.signed(c[a]).unsigned_abs() as usize <= modes) {
            coeffs.values[i] = complex(&mut r);
        }
    }
    crate::grid::fft_inverse(&coeffs)
}
