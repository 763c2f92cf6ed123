//! Two-point kernels with the composition `(k∘l)(x,z) = ∫k(x,y)l(y,z)dy`.
//!
//! A kernel stores its values on grid×grid together with the quadrature
//! weight `w` (the cell volume on a grid, 1 for discrete mode indices), so
//! that composition is `A·B·w`. As an operator a kernel acts as the matrix
//! `w·A`; the identity operator δ is kept symbolic in [`DiagonalPlusKernel`].

use std::io::{Read, Write};
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Grid};
use crate::linalg::{self, matmul, CMat, ONE};

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub values: CMat,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Symmetric,
    ConjugateSymmetric,
    General,
}

impl Kind {
    fn as_str(&self) -> &'static str {
        match self {
            Kind::Symmetric => "symmetric",
            Kind::ConjugateSymmetric => "conjugate-symmetric",
            Kind::General => "general",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trace {
    Finite(Complex64),
    /// The kernel contains a δ part, whose trace is infinite.
    Divergent,
}

impl Trace {
    pub fn finite(self) -> Option<Complex64> {
        match self {
            Trace::Finite(z) => Some(z),
            Trace::Divergent => None,
        }
    }
}

impl Kernel {
    pub fn new(values: CMat, weight: f64) -> Self {
        assert_eq!(values.nrows(), values.ncols(), "kernels are square");
        Kernel { values, weight }
    }

    pub fn zeros(n: usize, weight: f64) -> Self {
        Kernel::new(CMat::zeros(n, n), weight)
    }

    pub fn on_grid(grid: &Grid, f: impl Fn(usize, usize) -> Complex64) -> Self {
        Kernel::new(CMat::from_fn(grid.len(), grid.len(), f), grid.dx())
    }

    /// Kernel of the operator matrix `op` (inverse of [`Kernel::operator`]).
    pub fn from_operator(op: &CMat, weight: f64) -> Self {
        Kernel::new(op / Complex64::new(weight, 0.0), weight)
    }

    /// Rank-one kernel `f(x) g(y)`.
    pub fn outer(f: &[Complex64], g: &[Complex64], weight: f64) -> Self {
        Kernel::new(CMat::from_fn(f.len(), g.len(), |i, j| f[i] * g[j]), weight)
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn operator(&self) -> CMat {
        &self.values * Complex64::new(self.weight, 0.0)
    }

    pub fn same_space(&self, other: &Kernel) -> bool {
        self.dim() == other.dim() && self.weight == other.weight
    }

    pub fn compose(&self, other: &Kernel) -> Kernel {
        assert!(self.same_space(other), "composition of kernels on different spaces");
        Kernel::new(matmul(&self.values, &other.values) * Complex64::new(self.weight, 0.0), self.weight)
    }

    pub fn try_compose(&self, other: &Kernel) -> Result<Kernel> {
        if !self.same_space(other) {
            return Err(Error::GridMismatch);
        }
        Ok(self.compose(other))
    }

    pub fn conj(&self) -> Kernel {
        Kernel::new(linalg::conj(&self.values), self.weight)
    }

    pub fn transpose(&self) -> Kernel {
        Kernel::new(self.values.transpose(), self.weight)
    }

    pub fn adjoint(&self) -> Kernel {
        Kernel::new(self.values.adjoint(), self.weight)
    }

    pub fn scale(&self, c: f64) -> Kernel {
        self.scale_c(Complex64::new(c, 0.0))
    }

    pub fn scale_c(&self, c: Complex64) -> Kernel {
        Kernel::new(&self.values * c, self.weight)
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        self.values.diagonal().iter().copied().collect()
    }

    pub fn trace(&self) -> Complex64 {
        self.values.trace() * self.weight
    }

    /// `(Σ|k|² w²)^{1/2}`.
    pub fn hs_norm(&self) -> f64 {
        linalg::frobenius(&self.values) * self.weight
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.values)
    }

    /// `max|K − Kᵀ|`.
    pub fn symmetry_residual(&self) -> f64 {
        linalg::max_abs(&(&self.values - self.values.transpose()))
    }

    /// `max|K − conj(Kᵀ)|`.
    pub fn hermiticity_residual(&self) -> f64 {
        linalg::max_abs(&(&self.values - self.values.adjoint()))
    }

    pub fn symmetrized(&self) -> Kernel {
        Kernel::new((&self.values + self.values.transpose()) * Complex64::new(0.5, 0.0), self.weight)
    }

    pub fn hermitized(&self) -> Kernel {
        Kernel::new((&self.values + self.values.adjoint()) * Complex64::new(0.5, 0.0), self.weight)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn write_to(&self, grid: &Grid, kind: Kind, mut w: impl Write) -> Result<()> {
        if grid.len() != self.dim() || grid.dx() != self.weight {
            return Err(Error::GridMismatch);
        }
        writeln!(w, "{} {} {} {}", grid.dim(), grid.n(), grid.box_length(), kind.as_str())?;
        let n = self.dim();
        let row_major: Vec<Complex64> = (0..n * n).map(|i| self.values[(i / n, i % n)]).collect();
        grid::write_complex(&mut w, &row_major)
    }

    pub fn read_from(mut r: impl Read) -> Result<(Grid, Kind, Kernel)> {
        let header = grid::read_header_line(&mut r)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(Error::Shape(format!("bad kernel header {header:?}")));
        }
        let g = grid::parse_grid_header(&parts[..3])?;
        let kind = match parts[3] {
            "symmetric" => Kind::Symmetric,
            "conjugate-symmetric" => Kind::ConjugateSymmetric,
            "general" => Kind::General,
            other => return Err(Error::Shape(format!("unknown kernel kind {other:?}"))),
        };
        let n = g.len();
        let vals = grid::read_complex(&mut r, n * n)?;
        Ok((g.clone(), kind, Kernel::new(CMat::from_row_slice(n, n, &vals), g.dx())))
    }
}

impl Add for &Kernel {
    type Output = Kernel;
    fn add(self, o: &Kernel) -> Kernel {
        assert!(self.same_space(o));
        Kernel::new(&self.values + &o.values, self.weight)
    }
}

impl Sub for &Kernel {
    type Output = Kernel;
    fn sub(self, o: &Kernel) -> Kernel {
        assert!(self.same_space(o));
        Kernel::new(&self.values - &o.values, self.weight)
    }
}

impl Neg for &Kernel {
    type Output = Kernel;
    fn neg(self) -> Kernel {
        Kernel::new(-&self.values, self.weight)
    }
}

impl Mul<&Kernel> for &Kernel {
    type Output = Kernel;
    fn mul(self, o: &Kernel) -> Kernel {
        self.compose(o)
    }
}

/// `c·δ(x−y) + p(x,y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalPlusKernel {
    pub delta: Complex64,
    pub part: Kernel,
}

impl DiagonalPlusKernel {
    pub fn identity(n: usize, weight: f64) -> Self {
        DiagonalPlusKernel { delta: ONE, part: Kernel::zeros(n, weight) }
    }

    pub fn new(delta: Complex64, part: Kernel) -> Self {
        DiagonalPlusKernel { delta, part }
    }

    /// `c·I + w·P`.
    pub fn operator(&self) -> CMat {
        let n = self.part.dim();
        linalg::identity(n) * self.delta + self.part.operator()
    }

    /// Split an operator matrix into `c·δ + kernel` with the given `c`.
    pub fn from_operator(op: &CMat, delta: Complex64, weight: f64) -> Self {
        let n = op.nrows();
        let rest = op - linalg::identity(n) * delta;
        DiagonalPlusKernel { delta, part: Kernel::from_operator(&rest, weight) }
    }

    pub fn compose(&self, other: &DiagonalPlusKernel) -> DiagonalPlusKernel {
        let part = &(&other.part.scale_c(self.delta) + &self.part.scale_c(other.delta)) + &self.part.compose(&other.part);
        DiagonalPlusKernel { delta: self.delta * other.delta, part }
    }

    /// `(c δ + P)∘K`.
    pub fn compose_left(&self, k: &Kernel) -> Kernel {
        &k.scale_c(self.delta) + &self.part.compose(k)
    }

    /// `K∘(c δ + P)`.
    pub fn compose_right(&self, k: &Kernel) -> Kernel {
        &k.scale_c(self.delta) + &k.compose(&self.part)
    }

    pub fn conj(&self) -> DiagonalPlusKernel {
        DiagonalPlusKernel { delta: self.delta.conj(), part: self.part.conj() }
    }

    pub fn trace(&self) -> Trace {
        if self.delta != Complex64::new(0.0, 0.0) {
            Trace::Divergent
        } else {
            Trace::Finite(self.part.trace())
        }
    }
}

pub fn compose(a: &Kernel, b: &Kernel) -> Result<Kernel> {
    a.try_compose(b)
}

pub fn trace(k: &Kernel) -> Complex64 {
    k.trace()
}

pub fn hs_norm(k: &Kernel) -> f64 {
    k.hs_norm()
}

const SERIES_TOL: f64 = 1e-14;
const SERIES_MAX_TERMS: usize = 64;

/// `sh(k) = Σ (k∘k̄)ⁿ∘k/(2n+1)!` and `ch(k) = δ + Σ_{n≥1} (k̄∘k)ⁿ/(2n)!`.
///
/// Terms are summed until the HS norm of a term drops below
/// `1e-14·max(1, ‖sum‖)`.
pub fn sh_ch_of(k: &Kernel) -> Result<(Kernel, DiagonalPlusKernel)> {
    let kbar = k.conj();
    let kbk = kbar.compose(k);
    let mut sh = k.clone();
    let mut term = k.clone();
    let mut p = Kernel::zeros(k.dim(), k.weight);
    let mut pterm = DiagonalPlusKernel::identity(k.dim(), k.weight);
    for n in 1..=SERIES_MAX_TERMS {
        // sh term n: previous ∘ (k̄∘k) / ((2n)(2n+1)); ch term n: previous ∘ (k̄∘k) / ((2n−1)(2n)).
        term = term.compose(&kbk).scale(1.0 / ((2 * n) * (2 * n + 1)) as f64);
        let next_p = pterm.compose_right(&kbk).scale(1.0 / ((2 * n - 1) * (2 * n)) as f64);
        pterm = DiagonalPlusKernel::new(Complex64::new(0.0, 0.0), next_p.clone());
        sh = &sh + &term;
        p = &p + &next_p;
        let small = term.hs_norm().max(next_p.hs_norm());
        if small <= SERIES_TOL * sh.hs_norm().max(p.hs_norm()).max(1.0) {
            return Ok((sh, DiagonalPlusKernel::new(ONE, p)));
        }
        if !small.is_finite() {
            break;
        }
    }
    Err(Error::NoConvergence { terms: SERIES_MAX_TERMS, last: term.hs_norm() })
}

/// Like [`sh_ch_of`] but for large `k`: evaluate at `k/2^j` and double back
/// up with the double-angle identities.
pub fn sh_ch_by_doubling(k: &Kernel) -> Result<(Kernel, DiagonalPlusKernel)> {
    let norm = k.hs_norm();
    let halvings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let (mut sh, mut ch) = sh_ch_of(&k.scale(0.5f64.powi(halvings)))?;
    for _ in 0..halvings {
        let s2 = sh.compose(&ch.part).scale(2.0);
        let s2 = &s2 + &sh.scale(2.0);
        let p2 = sh.conj().compose(&sh).scale(2.0);
        sh = s2;
        ch = DiagonalPlusKernel::new(ONE, p2);
    }
    Ok((sh, ch))
}

/// `s₂ = 2 sh∘ch` (kernel part) and `p₂ = 2 sh̄∘sh`, i.e. `sh(2k)` and `ch(2k) − δ`.
pub fn double_angle(sh: &Kernel, ch: &DiagonalPlusKernel) -> Result<(Kernel, Kernel)> {
    let s2 = ch.compose_right(sh).scale(2.0);
    let p2 = sh.conj().compose(sh).scale(2.0);
    let scale = 1.0 + s2.max_abs();
    let rs = s2.symmetry_residual();
    if rs > 1e-8 * scale {
        return Err(Error::Symmetry { what: "s2 = 2 sh∘ch", residual: rs });
    }
    let rp = p2.hermiticity_residual();
    if rp > 1e-8 * (1.0 + p2.max_abs()) {
        return Err(Error::Symmetry { what: "p2 = 2 conj(sh)∘sh", residual: rp });
    }
    Ok((s2, p2))
}

pub const MAX_CONDITION: f64 = 1e12;

/// `(c δ + p)^{-1} = δ/c + q` via a dense solve on the operator `cI + w·P`.
pub fn invert_ch(ch: &DiagonalPlusKernel) -> Result<DiagonalPlusKernel> {
    if ch.delta.norm() == 0.0 {
        return Err(Error::IllConditioned(f64::INFINITY));
    }
    let inv = linalg::inverse_guarded(&ch.operator(), MAX_CONDITION)?;
    Ok(DiagonalPlusKernel::from_operator(&inv, ONE / ch.delta, ch.part.weight))
}

/// Inverse of [`sh_ch_of`]: with `S = w·sh`, `H = S S̄` is Hermitian and
/// `K = asinh(√H)/√H · S`.
pub fn recover_k(sh: &Kernel) -> Result<Kernel> {
    let rs = sh.symmetry_residual();
    if rs > 1e-8 * (1.0 + sh.max_abs()) {
        return Err(Error::Symmetry { what: "sh", residual: rs });
    }
    let s = sh.operator();
    let h = matmul(&s, &linalg::conj(&s));
    let f = linalg::hermitian_function(&h, |l| {
        let l = l.max(0.0);
        if l < 1e-300 {
            1.0
        } else {
            let r = l.sqrt();
            r.asinh() / r
        }
    });
    let k = Kernel::from_operator(&matmul(&f, &s), sh.weight);
    if !k.is_finite() {
        return Err(Error::Numerical("non-finite spectral function in recover_k".into()));
    }
    Ok(k.symmetrized())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::linalg::{expm, ZERO};

    pub(crate) fn random_k(n: usize, weight: f64, size: f64, seed: u64) -> Kernel {
        crate::random::random_pair_kernel(n, weight, size, seed)
    }

    fn unit_real(n: usize, weight: f64) -> Vec<Complex64> {
        let raw: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.37).sin() + 0.3).collect();
        let norm = (raw.iter().map(|v| v * v).sum::<f64>() * weight).sqrt();
        raw.iter().map(|v| Complex64::new(v / norm, 0.0)).collect()
    }

    #[test]
    fn composition_rules() {
        let w = 0.25;
        let k = random_k(12, w, 1.0, 1);
        let id = DiagonalPlusKernel::identity(12, w);
        assert_eq!(id.compose_left(&k), k);
        let f = unit_real(12, w);
        let g: Vec<Complex64> = (0..12).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let g2: Vec<Complex64> = (0..12).map(|i| Complex64::new(1.0, -(i as f64) * 0.1)).collect();
        let h: Vec<Complex64> = (0..12).map(|i| Complex64::new(0.5, i as f64)).collect();
        let lhs = Kernel::outer(&f, &g, w).compose(&Kernel::outer(&g2, &h, w));
        let c: Complex64 = g.iter().zip(&g2).map(|(a, b)| a * b).sum::<Complex64>() * w;
        let rhs = Kernel::outer(&f, &h, w).scale_c(c);
        assert!((&lhs - &rhs).max_abs() < 1e-12);
    }

    #[test]
    fn compose_matches_triple_loop() {
        let w = 0.1;
        let (a, b) = (random_k(16, w, 3.0, 2), random_k(16, w, 2.0, 3));
        let a = Kernel::new(&a.values + CMat::from_fn(16, 16, |i, j| Complex64::new(i as f64 * 0.01, -(j as f64) * 0.02)), w);
        let c = a.compose(&b);
        for i in 0..16 {
            for j in 0..16 {
                let s: Complex64 = (0..16).map(|l| a.values[(i, l)] * b.values[(l, j)]).sum::<Complex64>() * w;
                assert!((c.values[(i, j)] - s).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_one_closed_forms() {
        let w = 0.2;
        let n = 10;
        let f = unit_real(n, w);
        let theta = 0.8;
        let ff = Kernel::outer(&f, &f, w);
        let (sh, ch) = sh_ch_of(&ff.scale(theta)).unwrap();
        assert!((&sh - &ff.scale(theta.sinh())).max_abs() < 1e-12);
        assert!((&ch.part - &ff.scale(theta.cosh() - 1.0)).max_abs() < 1e-12);
        let (s2, p2) = double_angle(&sh, &ch).unwrap();
        assert!((&s2 - &ff.scale((2.0 * theta).sinh())).max_abs() < 1e-12);
        assert!((&p2 - &ff.scale((2.0 * theta).cosh() - 1.0)).max_abs() < 1e-12);

        let inv = invert_ch(&ch).unwrap();
        assert!((&inv.part - &ff.scale(1.0 / theta.cosh() - 1.0)).max_abs() < 1e-12);
        let back = recover_k(&sh).unwrap();
        assert!((&back - &ff.scale(theta)).max_abs() < 1e-10);
        assert!((ff.trace() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_inputs() {
        let z = Kernel::zeros(8, 0.5);
        let (sh, ch) = sh_ch_of(&z).unwrap();
        assert_eq!(sh, z);
        assert_eq!(ch, DiagonalPlusKernel::identity(8, 0.5));
        let (s2, p2) = double_angle(&sh, &ch).unwrap();
        assert_eq!((s2.max_abs(), p2.max_abs()), (0.0, 0.0));
        assert_eq!(invert_ch(&ch).unwrap(), DiagonalPlusKernel::identity(8, 0.5));
        assert_eq!(recover_k(&z).unwrap().max_abs(), 0.0);
        assert_eq!((z.trace(), z.hs_norm()), (ZERO, 0.0));
        assert_eq!(ch.trace(), Trace::Divergent);
    }

    #[test]
    fn blocks_match_dense_exponential() {
        let (n, w) = (12, 0.3);
        let k = random_k(n, w, 1.5, 7);
        let (sh, ch) = sh_ch_of(&k).unwrap();
        let kop = k.operator();
        let mut big = CMat::zeros(2 * n, 2 * n);
        big.view_mut((0, n), (n, n)).copy_from(&linalg::conj(&kop));
        big.view_mut((n, 0), (n, n)).copy_from(&kop);
        let e = expm(&big);
        let tl = e.view((0, 0), (n, n)).into_owned();
        let bl = e.view((n, 0), (n, n)).into_owned();
        let tr = e.view((0, n), (n, n)).into_owned();
        let br = e.view((n, n), (n, n)).into_owned();
        assert!(linalg::max_abs(&(tl - ch.operator())) < 1e-12);
        assert!(linalg::max_abs(&(bl - sh.operator())) < 1e-12);
        assert!(linalg::max_abs(&(tr - sh.conj().operator())) < 1e-12);
        assert!(linalg::max_abs(&(br - ch.conj().operator())) < 1e-12);
    }

    #[test]
    fn doubling_matches_direct_series() {
        let k = random_k(10, 0.4, 3.0, 4);
        let (a, ca) = sh_ch_of(&k).unwrap();
        let (b, cb) = sh_ch_by_doubling(&k).unwrap();
        let scale = a.max_abs();
        assert!((&a - &b).max_abs() < 1e-11 * scale);
        assert!((&ca.part - &cb.part).max_abs() < 1e-11 * scale);
        assert!(matches!(sh_ch_of(&random_k(10, 0.4, 200.0, 4)), Err(Error::NoConvergence { .. })));
        assert!(sh_ch_by_doubling(&random_k(10, 0.4, 200.0, 4)).is_ok());
    }

    #[test]
    fn inverse_and_round_trip() {
        let k = random_k(16, 0.25, 1.2, 5);
        let (sh, ch) = sh_ch_of(&k).unwrap();
        let inv = invert_ch(&ch).unwrap();
        let prod = ch.compose(&inv);
        assert!((prod.delta - ONE).norm() < 1e-14 && prod.part.max_abs() < 1e-10);
        let back = recover_k(&sh).unwrap();
        assert!((&back - &k).max_abs() < 1e-8);
    }

    #[test]
    fn kernel_io_round_trip() {
        let g = crate::grid::make_grid(1, 8, 3.3).unwrap();
        let k = Kernel::new(random_k(8, g.dx(), 1.0, 9).values, g.dx());
        let mut buf = Vec::new();
        k.write_to(&g, Kind::Symmetric, &mut buf).unwrap();
        let (g2, kind, back) = Kernel::read_from(buf.as_slice()).unwrap();
        assert_eq!((g2, kind), (g, Kind::Symmetric));
        assert_eq!(back, k);
    }
}
