//! Dense complex linear algebra helpers on top of nalgebra.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Complex product through four real GEMMs; several times faster than the
/// generic complex kernel for the sizes used here.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
    if a.nrows() * a.ncols() * b.ncols() < 4096 {
        return a * b;
    }
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    re.zip_map(&im, Complex64::new)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn conj(a: &CMat) -> CMat {
    a.map(|z| z.conj())
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    matmul(a, b) - matmul(b, a)
}

/// Matrix exponential (Padé scaling and squaring).
pub fn expm(a: &CMat) -> CMat {
    a.clone().exp()
}

/// Apply a real scalar function to a Hermitian matrix through its
/// eigendecomposition.
pub fn hermitian_function(h: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let herm = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(herm);
    let d = CMat::from_diagonal(&eig.eigenvalues.map(|l| Complex64::new(f(l), 0.0)));
    let v = &eig.eigenvectors;
    matmul(&matmul(v, &d), &v.adjoint())
}

/// Ratio of extreme singular values.
pub fn condition_number(a: &CMat) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Dense inverse with a condition-number guard.
pub fn inverse_guarded(a: &CMat, max_cond: f64) -> Result<CMat> {
    let cond = condition_number(a);
    if !(cond <= max_cond) {
        return Err(Error::IllConditioned(cond));
    }
    a.clone().try_inverse().ok_or(Error::IllConditioned(f64::INFINITY))
}
