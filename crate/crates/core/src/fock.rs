//! Truncated bosonic Fock space on `M` modes with a particle cap, for dense
//! checks of the quadratic-operator calculus.
//!
//! Basis states are occupation tuples ordered by total particle number and
//! then lexicographically, so the basis for cap `n` is a prefix of the basis
//! for any larger cap. Polynomials of degree `r` are assembled at cap `n + r`
//! and then restricted, which makes their matrix elements between states of
//! the cap-`n` space exact.

use std::collections::HashMap;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{self, Kernel};
use crate::linalg::{self, expm, matmul, CMat, ONE, ZERO};

pub const MAX_DIMENSION: usize = 20_000;

#[derive(Debug, Clone)]
pub struct TruncatedFock {
    modes: usize,
    cap: usize,
    basis: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

fn tuples_with_total(modes: usize, total: usize, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if modes == 1 {
        prefix.push(total as u8);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first as u8);
        tuples_with_total(modes - 1, total - first, prefix, out);
        prefix.pop();
    }
}

impl TruncatedFock {
    pub fn new(modes: usize, cap: usize) -> Result<Self> {
        if modes == 0 || modes > 6 {
            return Err(Error::Resource(format!("mode count must be in 1..=6, got {modes}")));
        }
        let dim = binomial(modes + cap, modes);
        if dim > MAX_DIMENSION || cap > 200 {
            return Err(Error::Resource(format!("Fock dimension {dim} exceeds {MAX_DIMENSION}")));
        }
        let mut basis = Vec::with_capacity(dim);
        for total in 0..=cap {
            tuples_with_total(modes, total, &mut vec![], &mut basis);
        }
        let index = basis.iter().enumerate().map(|(i, b)| (b.clone(), i)).collect();
        Ok(TruncatedFock { modes, cap, basis, index })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }
    pub fn cap(&self) -> usize {
        self.cap
    }
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
    pub fn basis(&self) -> &[Vec<u8>] {
        &self.basis
    }

    pub fn total(&self, idx: usize) -> usize {
        self.basis[idx].iter().map(|&n| n as usize).sum()
    }

    /// Number of basis states with total occupation at most `level`
    /// (they form a prefix of the basis).
    pub fn sub_cap_dim(&self, level: usize) -> usize {
        binomial(self.modes + level.min(self.cap), self.modes)
    }

    pub fn extended(&self, extra: usize) -> Result<TruncatedFock> {
        TruncatedFock::new(self.modes, self.cap + extra)
    }

    /// Restrict an operator on an extended space to this space.
    pub fn restrict(&self, op: &CMat) -> CMat {
        op.view((0, 0), (self.dim(), self.dim())).into_owned()
    }

    /// `a_j` (0-based mode index) with `a|n⟩ = √n |n−1⟩`.
    pub fn annihilation(&self, j: usize) -> CMat {
        assert!(j < self.modes, "mode index out of range");
        let d = self.dim();
        let mut a = CMat::zeros(d, d);
        for (col, state) in self.basis.iter().enumerate() {
            let n = state[j];
            if n > 0 {
                let mut lower = state.clone();
                lower[j] -= 1;
                let row = self.index[&lower];
                a[(row, col)] = Complex64::new((n as f64).sqrt(), 0.0);
            }
        }
        a
    }

    pub fn ladder(&self, j: usize) -> (CMat, CMat) {
        let a = self.annihilation(j);
        let ad = a.adjoint();
        (a, ad)
    }

    pub fn vacuum(&self) -> DVector<Complex64> {
        let mut v = DVector::zeros(self.dim());
        v[0] = ONE;
        v
    }

    pub fn identity(&self) -> CMat {
        linalg::identity(self.dim())
    }

    /// Total number operator.
    pub fn number(&self) -> CMat {
        CMat::from_diagonal(&DVector::from_iterator(self.dim(), (0..self.dim()).map(|i| Complex64::new(self.total(i) as f64, 0.0))))
    }

    /// `a_j v` without forming the matrix.
    pub fn apply_annihilation(&self, j: usize, v: &DVector<Complex64>) -> DVector<Complex64> {
        let mut out = DVector::zeros(self.dim());
        for (col, state) in self.basis.iter().enumerate() {
            let n = state[j];
            if n > 0 && v[col] != ZERO {
                let mut lower = state.clone();
                lower[j] -= 1;
                out[self.index[&lower]] += v[col] * (n as f64).sqrt();
            }
        }
        out
    }

    /// `a*_j v`; components pushed past the cap are dropped.
    pub fn apply_creation(&self, j: usize, v: &DVector<Complex64>) -> DVector<Complex64> {
        let mut out = DVector::zeros(self.dim());
        for (col, state) in self.basis.iter().enumerate() {
            if v[col] == ZERO || self.total(col) == self.cap {
                continue;
            }
            let mut upper = state.clone();
            upper[j] += 1;
            out[self.index[&upper]] += v[col] * ((upper[j]) as f64).sqrt();
        }
        out
    }

    /// Zero-pad a vector of a smaller-cap space with the same modes.
    pub fn embed(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let mut out = DVector::zeros(self.dim());
        out.rows_mut(0, v.len()).copy_from(v);
        out
    }

    /// Norm of the component with total occupation exactly `n`.
    pub fn sector_norm(&self, v: &DVector<Complex64>, n: usize) -> f64 {
        (0..self.dim()).filter(|&i| self.total(i) == n).map(|i| v[i].norm_sqr()).sum::<f64>().sqrt()
    }

    /// Max-abs of `op` restricted to columns with total occupation ≤ `level`.
    pub fn sub_cap_norm(&self, op: &CMat, level: usize) -> f64 {
        let cols = self.sub_cap_dim(level);
        linalg::max_abs(&op.columns(0, cols).into_owned())
    }

    /// Frobenius norm over columns with total ≤ `level`.
    pub fn sub_cap_frobenius(&self, op: &CMat, level: usize) -> f64 {
        let cols = self.sub_cap_dim(level);
        linalg::frobenius(&op.columns(0, cols).into_owned())
    }
}

/// `L = [[d, l], [k, −dᵀ]]` with `k`, `l` symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticBlock {
    pub d: CMat,
    pub k: CMat,
    pub l: CMat,
}

impl SymplecticBlock {
    pub fn new(d: CMat, k: CMat, l: CMat) -> Result<Self> {
        let m = d.nrows();
        if [d.ncols(), k.nrows(), k.ncols(), l.nrows(), l.ncols()].iter().any(|&s| s != m) {
            return Err(Error::Shape("symplectic blocks must all be M×M".into()));
        }
        for (what, x) in [("k", &k), ("l", &l)] {
            let r = linalg::max_abs(&(x - x.transpose()));
            if r > 1e-12 * (1.0 + linalg::max_abs(x)) {
                return Err(Error::Symmetry { what: if what == "k" { "block k" } else { "block l" }, residual: r });
            }
        }
        Ok(SymplecticBlock { d, k, l })
    }

    /// Entries uniform in the unit square; `d` general, `k`, `l` symmetric.
    pub fn random(m: usize, r: &mut impl rand::Rng) -> Self {
        let d = crate::random::random_matrix(m, r);
        let k = crate::random::random_symmetric(m, r);
        let l = crate::random::random_symmetric(m, r);
        SymplecticBlock { d, k, l }
    }

    pub fn zeros(m: usize) -> Self {
        SymplecticBlock { d: CMat::zeros(m, m), k: CMat::zeros(m, m), l: CMat::zeros(m, m) }
    }

    /// Pair-excitation generator `K = [[0, k̄], [k, 0]]`.
    pub fn pair(k: &CMat) -> Result<Self> {
        let m = k.nrows();
        SymplecticBlock::new(CMat::zeros(m, m), k.clone(), linalg::conj(k))
    }

    pub fn modes(&self) -> usize {
        self.d.nrows()
    }

    pub fn assemble(&self) -> CMat {
        let m = self.modes();
        let mut out = CMat::zeros(2 * m, 2 * m);
        out.view_mut((0, 0), (m, m)).copy_from(&self.d);
        out.view_mut((0, m), (m, m)).copy_from(&self.l);
        out.view_mut((m, 0), (m, m)).copy_from(&self.k);
        out.view_mut((m, m), (m, m)).copy_from(&(-self.d.transpose()));
        out
    }

    pub fn from_matrix(s: &CMat) -> Result<Self> {
        let m = s.nrows() / 2;
        let d = s.view((0, 0), (m, m)).into_owned();
        let l = s.view((0, m), (m, m)).into_owned();
        let k = s.view((m, 0), (m, m)).into_owned();
        let corner = s.view((m, m), (m, m)).into_owned();
        let r = linalg::max_abs(&(corner + d.transpose()));
        if r > 1e-10 * (1.0 + linalg::max_abs(s)) {
            return Err(Error::Symmetry { what: "symplectic corner", residual: r });
        }
        SymplecticBlock::new(d, k.clone(), l.clone())
            .or_else(|_| SymplecticBlock::new(s.view((0, 0), (m, m)).into_owned(), k.symmetrize_c(), l.symmetrize_c()))
    }

    pub fn commutator(&self, other: &SymplecticBlock) -> Result<SymplecticBlock> {
        SymplecticBlock::from_matrix(&linalg::commutator(&self.assemble(), &other.assemble()))
    }
}

trait SymmetrizeC {
    fn symmetrize_c(&self) -> CMat;
}

impl SymmetrizeC for CMat {
    fn symmetrize_c(&self) -> CMat {
        (self + self.transpose()) * Complex64::new(0.5, 0.0)
    }
}

/// Ladder operators of an extended space, restricted later.
struct Ladders {
    a: Vec<CMat>,
    ad: Vec<CMat>,
}

impl Ladders {
    fn new(space: &TruncatedFock) -> Self {
        let a: Vec<CMat> = (0..space.modes()).map(|j| space.annihilation(j)).collect();
        let ad = a.iter().map(|x| x.adjoint()).collect();
        Ladders { a, ad }
    }
}

/// `I(L) = −½Σ_ij (d_ij a_i a*_j + d_ji a*_i a_j + k_ij a*_i a*_j − l_ij a_i a_j)`.
pub fn quadratic_i(space: &TruncatedFock, block: &SymplecticBlock) -> Result<CMat> {
    let ext = space.extended(2)?;
    let lad = Ladders::new(&ext);
    let m = space.modes();
    if block.modes() != m {
        return Err(Error::Shape("block size differs from the mode count".into()));
    }
    let mut op = CMat::zeros(ext.dim(), ext.dim());
    for i in 0..m {
        for j in 0..m {
            let (d_ij, d_ji, k_ij, l_ij) = (block.d[(i, j)], block.d[(j, i)], block.k[(i, j)], block.l[(i, j)]);
            if d_ij != ZERO {
                op += matmul(&lad.a[i], &lad.ad[j]) * d_ij;
            }
            if d_ji != ZERO {
                op += matmul(&lad.ad[i], &lad.a[j]) * d_ji;
            }
            if k_ij != ZERO {
                op += matmul(&lad.ad[i], &lad.ad[j]) * k_ij;
            }
            if l_ij != ZERO {
                op -= matmul(&lad.a[i], &lad.a[j]) * l_ij;
            }
        }
    }
    Ok(space.restrict(&op) * Complex64::new(-0.5, 0.0))
}

/// Normal-ordered form of [`quadratic_i`]: `a_i a*_j = a*_j a_i + δ_ij`,
/// which moves `−½ tr d` into a scalar.
pub fn quadratic_i_normal_ordered(space: &TruncatedFock, block: &SymplecticBlock) -> Result<CMat> {
    let ext = space.extended(2)?;
    let lad = Ladders::new(&ext);
    let m = space.modes();
    let mut op = CMat::zeros(ext.dim(), ext.dim());
    for i in 0..m {
        for j in 0..m {
            op += matmul(&lad.ad[j], &lad.a[i]) * block.d[(i, j)];
            op += matmul(&lad.ad[i], &lad.a[j]) * block.d[(j, i)];
            op += matmul(&lad.ad[i], &lad.ad[j]) * block.k[(i, j)];
            op -= matmul(&lad.a[i], &lad.a[j]) * block.l[(i, j)];
        }
    }
    let tr = block.d.trace();
    Ok((space.restrict(&op) + space.identity() * tr) * Complex64::new(-0.5, 0.0))
}

/// `B(k) = I([[0, k̄], [k, 0]]) = ½Σ(k̄_ij a_i a_j − k_ij a*_i a*_j)`.
pub fn pair_generator(space: &TruncatedFock, k: &CMat) -> Result<CMat> {
    quadratic_i(space, &SymplecticBlock::pair(k)?)
}

/// `B(k)v = ½Σ(k̄_ij a_i a_j − k_ij a*_i a*_j)v` applied directly.
pub fn apply_pair_generator(space: &TruncatedFock, k: &CMat, v: &DVector<Complex64>) -> DVector<Complex64> {
    let m = space.modes();
    let mut out = DVector::zeros(space.dim());
    for j in 0..m {
        let aj = space.apply_annihilation(j, v);
        let cj = space.apply_creation(j, v);
        for i in 0..m {
            if k[(i, j)] != ZERO {
                out += space.apply_annihilation(i, &aj) * (k[(i, j)].conj() * 0.5);
                out -= space.apply_creation(i, &cj) * (k[(i, j)] * 0.5);
            }
        }
    }
    out
}

/// `e^{B(k)}v` by a scaled Taylor series on the truncated space.
pub fn exp_pair_apply(space: &TruncatedFock, k: &CMat, v: &DVector<Complex64>) -> DVector<Complex64> {
    // ‖B‖ on the truncated space is at most about ‖k‖·(cap + M).
    let bound = linalg::frobenius(k) * (space.cap() + space.modes()) as f64;
    let pieces = (bound / 0.5).ceil().max(1.0) as usize;
    let scaled = k / Complex64::new(pieces as f64, 0.0);
    let mut x = v.clone();
    for _ in 0..pieces {
        let mut term = x.clone();
        let mut sum = x.clone();
        for n in 1..60 {
            term = apply_pair_generator(space, &scaled, &term) / Complex64::new(n as f64, 0.0);
            sum += &term;
            if term.norm() <= 1e-17 * sum.norm() {
                break;
            }
        }
        x = sum;
    }
    x
}

/// `A(f) = Σ f₁_j a_j + f₂_j a*_j` built exactly on the extended space.
pub fn field_operator(space: &TruncatedFock, f1: &[Complex64], f2: &[Complex64]) -> Result<CMat> {
    let ext = space.extended(1)?;
    let lad = Ladders::new(&ext);
    let mut op = CMat::zeros(ext.dim(), ext.dim());
    for j in 0..space.modes() {
        op += &lad.a[j] * f1[j] + &lad.ad[j] * f2[j];
    }
    Ok(space.restrict(&op))
}

/// `‖[I(L₁), I(L₂)] − I([L₁, L₂])‖` on columns with total ≤ cap − 2.
pub fn check_isomorphism(space: &TruncatedFock, l1: &SymplecticBlock, l2: &SymplecticBlock) -> Result<f64> {
    let (i1, i2) = (quadratic_i(space, l1)?, quadratic_i(space, l2)?);
    let i12 = quadratic_i(space, &l1.commutator(l2)?)?;
    let diff = linalg::commutator(&i1, &i2) - i12;
    Ok(space.sub_cap_frobenius(&diff, space.cap().saturating_sub(2)))
}

#[derive(Debug, Clone, Serialize)]
pub struct BogoliubovReport {
    pub modes: usize,
    pub n_max: usize,
    /// Columns with total occupation up to this level are compared.
    pub level: usize,
    /// Extra particle levels used when exponentiating.
    pub padding: usize,
    pub residual: f64,
    pub unitarity: f64,
    /// Residual at a larger cap; a much smaller value flags truncation.
    pub residual_larger_cap: f64,
    pub truncation_dominated: bool,
}

/// Dimension budget for the padded space used to exponentiate `B(k)`.
pub const PAD_DIMENSION: usize = 4_000;

fn conjugation_residual(space: &TruncatedFock, k: &CMat, level: usize, pad: usize) -> Result<(f64, f64)> {
    let big = space.extended(pad)?;
    let b = pair_generator(&big, k)?;
    let u = expm(&b);
    let uinv = expm(&(-&b));
    let unitarity = linalg::max_abs(&(matmul(&u, &u.adjoint()) - big.identity()));
    let (sh, ch) = kernel::sh_ch_of(&Kernel::new(k.clone(), 1.0))?;
    let lad = Ladders::new(&big.extended(1)?);
    let a: Vec<CMat> = lad.a.iter().map(|x| big.restrict(x)).collect();
    let ad: Vec<CMat> = lad.ad.iter().map(|x| big.restrict(x)).collect();
    let chop = ch.operator();
    let shop = sh.operator();
    let mut worst = 0.0f64;
    for j in 0..space.modes() {
        let lhs = matmul(&matmul(&u, &a[j]), &uinv);
        let mut rhs = CMat::zeros(big.dim(), big.dim());
        for i in 0..space.modes() {
            rhs += &a[i] * chop[(i, j)] + &ad[i] * shop[(i, j)];
        }
        worst = worst.max(big.sub_cap_norm(&(lhs - rhs), level));
    }
    Ok((worst, unitarity))
}

/// Largest padding (at most `2·max(n_max, 8)`) keeping the padded space within budget.
fn padding(space: &TruncatedFock, extra: usize) -> usize {
    let mut pad = 2 * space.cap().max(8);
    while pad > 0 && binomial(space.modes() + space.cap() + pad + extra + 1, space.modes()) > PAD_DIMENSION {
        pad -= 1;
    }
    pad
}

/// Compare `e^B a_j e^{−B}` with `Σ_i ch(i,j) a_i + sh(i,j) a*_i` on columns
/// with total occupation ≤ `n_max/2`. The exponential is taken on a padded
/// space so that the cut at the top does not leak into the compared columns;
/// a residual that still drops by 10× when the padding grows by 4 is flagged.
pub fn bogoliubov(space: &TruncatedFock, k: &CMat) -> Result<BogoliubovReport> {
    let r = linalg::max_abs(&(k - k.transpose()));
    if r > 1e-12 {
        return Err(Error::Symmetry { what: "pair matrix k", residual: r });
    }
    let level = space.cap() / 2;
    let pad = padding(space, 4);
    let (residual, unitarity) = conjugation_residual(space, k, level, pad)?;
    let (residual_larger_cap, _) = conjugation_residual(space, k, level, pad + 4)?;
    Ok(BogoliubovReport {
        modes: space.modes(),
        n_max: space.cap(),
        level,
        padding: pad,
        residual,
        unitarity,
        residual_larger_cap,
        truncation_dominated: residual > 1e-12 && residual_larger_cap < 0.1 * residual,
    })
}

#[derive(Debug, Clone)]
pub struct CoherentState {
    pub state: DVector<Complex64>,
    /// Norm of the component in each particle-number sector.
    pub sector_weights: Vec<f64>,
    /// Poisson probability of exceeding the cap.
    pub truncation_tail: f64,
    pub truncated: bool,
}

/// `e^{−√N A(φ)}|0⟩` with `A(φ) = a(φ̄) − a*(φ)`, exponentiated on a padded
/// space and projected back to the cap.
pub fn coherent(space: &TruncatedFock, phi: &[Complex64], n: f64) -> Result<CoherentState> {
    if phi.len() != space.modes() {
        return Err(Error::Shape("φ must have one entry per mode".into()));
    }
    let root = n.sqrt();
    let f1: Vec<Complex64> = phi.iter().map(|z| -z.conj() * root).collect();
    let f2: Vec<Complex64> = phi.iter().map(|z| z * root).collect();
    let big = space.extended(padding(space, 1))?;
    let gen = field_operator(&big, &f1, &f2)?;
    let state = expm(&gen).rows(0, space.dim()).column(0).into_owned();
    let mut sector_weights = vec![0.0; space.cap() + 1];
    for (i, z) in state.iter().enumerate() {
        sector_weights[space.total(i)] += z.norm_sqr();
    }
    for w in sector_weights.iter_mut() {
        *w = w.sqrt();
    }
    let mean = n * phi.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let truncation_tail = poisson_tail(mean, space.cap());
    Ok(CoherentState { state, sector_weights, truncation_tail, truncated: truncation_tail > 1e-6 })
}

/// `P(X > cap)` for `X ~ Poisson(mean)`.
pub fn poisson_tail(mean: f64, cap: usize) -> f64 {
    let mut term = (-mean).exp();
    let mut cdf = term;
    for j in 1..=cap {
        term *= mean / j as f64;
        cdf += term;
    }
    (1.0 - cdf).max(0.0)
}

/// Exact sector weight `(e^{−N} N^n / n!)^{1/2}`.
pub fn coherent_weight(n: f64, sector: usize) -> f64 {
    let ln = -n + sector as f64 * n.ln() - ln_factorial(sector);
    (0.5 * ln).exp()
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|j| (j as f64).ln()).sum()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BlockDiagReport {
    pub residual: f64,
    /// Rounding floor of the centred difference.
    pub noise_floor: f64,
}

/// `e^{−K} N_u e^{K}` for `K = [[0, k̄], [k, 0]]`.
pub fn conjugated_number_matrix(k: &CMat) -> CMat {
    let kk = SymplecticBlock::pair(&k.symmetrize_c()).expect("symmetrized").assemble();
    let m = k.nrows();
    let mut nu = linalg::identity(2 * m);
    for i in m..2 * m {
        nu[(i, i)] = -ONE;
    }
    matmul(&matmul(&expm(&(-&kk)), &nu), &expm(&kk))
}

/// `‖−(1/i)∂t X + [G + M, X]‖` with `X = e^{−K}N_u e^{K}`, `G = diag(g, −gᵀ)`,
/// `M = [[0, m̄], [−m, 0]]`; the time derivative is a centred difference of
/// `k` samples spaced `h` apart.
pub fn block_diag_residual(k_prev: &CMat, k_mid: &CMat, k_next: &CMat, h: f64, g: &CMat, m: &CMat) -> BlockDiagReport {
    let mm = g.nrows();
    let x = conjugated_number_matrix(k_mid);
    let xdot = (conjugated_number_matrix(k_next) - conjugated_number_matrix(k_prev)) / Complex64::new(2.0 * h, 0.0);
    let mut big = CMat::zeros(2 * mm, 2 * mm);
    big.view_mut((0, 0), (mm, mm)).copy_from(g);
    big.view_mut((mm, mm), (mm, mm)).copy_from(&(-g.transpose()));
    big.view_mut((0, mm), (mm, mm)).copy_from(&linalg::conj(m));
    big.view_mut((mm, 0), (mm, mm)).copy_from(&(-m));
    let r = xdot * Complex64::new(0.0, 1.0) + linalg::commutator(&big, &x);
    BlockDiagReport { residual: linalg::frobenius(&r), noise_floor: f64::EPSILON * linalg::frobenius(&x) / h }
}
