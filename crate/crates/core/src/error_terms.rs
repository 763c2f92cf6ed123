//! The error operator `e^B([A,V] + N^{-1/2}V)e^{−B}` applied to the vacuum,
//! assembled sector by sector from explicit kernels, plus the phase terms
//! `μ₀`, `μ₁` and the `N`-scaling sweep.
//!
//! Sector kernels come from Wick's theorem applied to `b*b*bb|0⟩` and
//! `b*bb|0⟩` with `b_x = ∫ch(y,x)a_y + sh(y,x)a*_y`. With the contractions
//!
//! ```text
//! c12 = (sh̄∘ch̄)(x1,x2)   c34 = (ch̄∘sh)(x1,x2)
//! c13 = (sh̄∘sh)(x1,x1)   c14 = (sh̄∘sh)(x1,x2)   c23 = (sh̄∘sh)(x2,x1)   c24 = (sh̄∘sh)(x2,x2)
//! ```
//!
//! the quartic part splits into a 4-particle kernel, six 2-particle kernels
//! (one per single contraction) and a vacuum number (double contractions),
//! and the cubic part into two 3-particle and six 1-particle kernels.
//!
//! All kernels are stored as point values on the grid; `δ` is `1/dx` on
//! the diagonal, and every integral is a sum times `dx`.

use std::collections::BTreeMap;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{self, LinearFit};
use crate::fock::{self, TruncatedFock};
use crate::grid::{convolve, Field, Grid};
use crate::hartree::{gaussian_packet, scaled_potential, HartreeState, Profile};
use crate::kernel::{self, DiagonalPlusKernel, Kernel};
use crate::linalg::{self, matmul, CMat, ZERO};
use crate::modes::ModeBasis;
use crate::pair::{self, PairRun};

/// Largest grid for 4-argument kernels (`n⁴` entries).
pub const MAX_N_QUARTIC: usize = 32;
/// Largest grid for 3-argument kernels.
pub const MAX_N_CUBIC: usize = 64;

/// Dense tensor over `order` grid (or mode) indices, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorKernel {
    pub order: usize,
    pub n: usize,
    /// Integration weight per index (`dx` on a grid, 1 for modes).
    pub weight: f64,
    pub values: Vec<Complex64>,
}

impl SectorKernel {
    pub fn zeros(order: usize, n: usize, weight: f64) -> Self {
        SectorKernel { order, n, weight, values: vec![ZERO; n.pow(order as u32)] }
    }

    fn from_matrix(m: &CMat, weight: f64) -> Self {
        let n = m.nrows();
        let mut k = SectorKernel::zeros(2, n, weight);
        for i in 0..n {
            for j in 0..n {
                k.values[i * n + j] = m[(i, j)];
            }
        }
        k
    }

    fn from_vector(v: &DVector<Complex64>, weight: f64) -> Self {
        SectorKernel { order: 1, n: v.len(), weight, values: v.iter().copied().collect() }
    }

    /// Plain `L²` norm of the kernel.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.weight.powi(self.order as i32)).sqrt()
    }

    /// Reorder indices: `out[i_perm[0], …] = self[i_0, …]`, i.e. axis `a`
    /// of `self` becomes axis `perm[a]` of the result.
    pub fn permuted(&self, perm: &[usize]) -> SectorKernel {
        let (n, r) = (self.n, self.order);
        let mut out = SectorKernel::zeros(r, n, self.weight);
        let mut idx = vec![0usize; r];
        let strides: Vec<usize> = (0..r).map(|a| n.pow((r - 1 - a) as u32)).collect();
        for (flat, v) in self.values.iter().enumerate() {
            let mut rem = flat;
            for (a, slot) in idx.iter_mut().enumerate() {
                *slot = rem / strides[a];
                rem %= strides[a];
            }
            let target: usize = (0..r).map(|a| idx[a] * strides[perm[a]]).sum();
            out.values[target] = *v;
        }
        out
    }

    pub fn symmetrized(&self) -> SectorKernel {
        let perms = permutations(self.order);
        let mut out = SectorKernel::zeros(self.order, self.n, self.weight);
        for p in &perms {
            let q = self.permuted(p);
            for (o, v) in out.values.iter_mut().zip(&q.values) {
                *o += v;
            }
        }
        let c = 1.0 / perms.len() as f64;
        out.values.iter_mut().for_each(|z| *z *= c);
        out
    }

    /// Norm of `∫Ψ a*_{y1}…a*_{yj}|0⟩`, i.e. `√(j!)·‖Sym Ψ‖`.
    pub fn fock_norm(&self) -> f64 {
        let fact: f64 = (1..=self.order).map(|j| j as f64).product();
        fact.sqrt() * self.symmetrized().l2_norm()
    }

    pub fn add(&self, other: &SectorKernel) -> SectorKernel {
        assert_eq!((self.order, self.n), (other.order, other.n), "sector kernels must share shape");
        let mut out = self.clone();
        out.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += b);
        out
    }

    pub fn max_abs_diff(&self, other: &SectorKernel) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Contract every index with the rows of `e` (shape `M×n`):
    /// `out[i…] = Σ_y Ψ(y…) Π e[i_a, y_a] · weight`.
    pub fn contract_each(&self, e: &CMat) -> SectorKernel {
        let m = e.nrows();
        let mut cur = self.values.clone();
        let mut dims = vec![self.n; self.order];
        for axis in 0..self.order {
            let before: usize = dims[..axis].iter().product();
            let after: usize = dims[axis + 1..].iter().product();
            let len = dims[axis];
            let mut next = vec![ZERO; before * m * after];
            for b in 0..before {
                for i in 0..m {
                    for y in 0..len {
                        let c = e[(i, y)] * self.weight;
                        if c == ZERO {
                            continue;
                        }
                        let src = &cur[(b * len + y) * after..(b * len + y + 1) * after];
                        let dst = &mut next[(b * m + i) * after..(b * m + i + 1) * after];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += c * s;
                        }
                    }
                }
            }
            cur = next;
            dims[axis] = m;
        }
        SectorKernel { order: self.order, n: m, weight: 1.0, values: cur }
    }
}

fn permutations(r: usize) -> Vec<Vec<usize>> {
    if r == 0 {
        return vec![vec![]];
    }
    let mut out = vec![];
    for p in permutations(r - 1) {
        for pos in 0..r {
            let mut q = p.clone();
            q.insert(pos, r - 1);
            out.push(q);
        }
    }
    out
}

/// `sh`, `ch̄`, `ch` and `v_N(x1−x2)` as point values on a common grid.
#[derive(Debug, Clone)]
pub struct ErrorInputs {
    pub n: usize,
    pub dx: f64,
    pub sh: CMat,
    /// `p = ch − δ`.
    pub p: CMat,
    pub phi: Vec<Complex64>,
    pub v: CMat,
    pub n_particles: f64,
}

impl ErrorInputs {
    /// `sh`, `p₁ = ch(k) − δ` (kernels), `φ` and the scaled potential.
    pub fn new(sh: &Kernel, p1: &Kernel, phi: &Field, v: &Field, n_particles: f64) -> Result<Self> {
        let grid = &phi.grid;
        if v.grid != *grid || sh.dim() != grid.len() || p1.dim() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if !(n_particles > 0.0) {
            return Err(Error::Config(format!("particle number must be positive, got {n_particles}")));
        }
        let n = grid.len();
        let dx = grid.dx();
        for (what, k) in [("sh", sh), ("p1", p1)] {
            if (k.weight - dx).abs() > 1e-12 * dx {
                return Err(Error::Shape(format!("{what} carries weight {} but the grid has dx = {dx}", k.weight)));
            }
        }
        let r = sh.symmetry_residual();
        if r > 1e-8 * (1.0 + sh.max_abs()) {
            return Err(Error::Symmetry { what: "sh", residual: r });
        }
        let vmat = CMat::from_fn(n, n, |i, j| Complex64::new(v.values[grid.diff_index(i, j)].re, 0.0));
        Ok(ErrorInputs { n, dx, sh: sh.values.clone(), p: p1.values.clone(), phi: phi.values.clone(), v: vmat, n_particles })
    }

    fn delta(&self) -> CMat {
        linalg::identity(self.n) / Complex64::new(self.dx, 0.0)
    }
    /// `ch̄` point values.
    pub fn chbar(&self) -> CMat {
        self.delta() + linalg::conj(&self.p)
    }
    pub fn ch(&self) -> CMat {
        self.delta() + &self.p
    }
    fn comp(&self, a: &CMat, b: &CMat) -> CMat {
        matmul(a, b) * Complex64::new(self.dx, 0.0)
    }
    fn quartic_prefactor(&self) -> f64 {
        0.5 / self.n_particles
    }
    fn cubic_prefactor(&self) -> f64 {
        self.n_particles.powf(-0.5)
    }
}

/// The contraction matrices shared by every term.
struct Contractions {
    /// `(sh̄∘sh)(x1,x2)`.
    ssq: CMat,
    c12: CMat,
    c34: CMat,
    /// `u(x) = ∫ v(x'−x)(sh̄∘sh)(x',x') dx'`.
    u: Vec<Complex64>,
}

impl Contractions {
    fn new(e: &ErrorInputs) -> Self {
        let sbar = linalg::conj(&e.sh);
        let chbar = e.chbar();
        let ssq = e.comp(&sbar, &e.sh);
        let c12 = e.comp(&sbar, &chbar);
        let c34 = e.comp(&chbar, &e.sh);
        let u = (0..e.n).map(|x2| (0..e.n).map(|x1| e.v[(x1, x2)] * ssq[(x1, x1)]).sum::<Complex64>() * e.dx).collect();
        Contractions { ssq, c12, c34, u }
    }
}

fn hadamard(a: &CMat, b: &CMat) -> CMat {
    a.component_mul(b)
}

fn diag(u: &[Complex64]) -> CMat {
    CMat::from_diagonal(&DVector::from_column_slice(u))
}

fn check_size(n: usize, limit: usize, what: &str) -> Result<()> {
    if n > limit {
        return Err(Error::Resource(format!("{what} kernels need n ≤ {limit} (one-dimensional grids), got {n}")));
    }
    Ok(())
}

/// `Σ_{x1,x2} v(x1−x2) L(y1,x1) S(y3,x1) R(y2,x2) S(y4,x2)·dx²·pref`,
/// returned with index order `(y1, y2, y3, y4)`.
fn quartic_tensor(e: &ErrorInputs, left: &CMat, right: &CMat) -> SectorKernel {
    let n = e.n;
    let pair_rows = |c: &CMat| CMat::from_fn(n * n, n, |row, x| c[(row / n, x)] * e.sh[(row % n, x)]);
    let a = pair_rows(left);
    let b = pair_rows(right);
    let scale = Complex64::new(e.dx * e.dx * e.quartic_prefactor(), 0.0);
    let full = matmul(&matmul(&a, &e.v), &b.transpose()) * scale;
    // full[(y1,y3),(y2,y4)] → (y1,y2,y3,y4)
    let mut out = SectorKernel::zeros(4, n, e.dx);
    for r in 0..n * n {
        for c in 0..n * n {
            let (y1, y3, y2, y4) = (r / n, r % n, c / n, c % n);
            out.values[((y1 * n + y2) * n + y3) * n + y4] = full[(r, c)];
        }
    }
    out
}

/// Cubic term from `φ̄(x2) b*_{x1} b_{x1} b_{x2}`:
/// `Σ v(x1−x2) φ̄(x2) L(y1,x1) sh(y2,x1) sh(y3,x2)`.
fn cubic_tensor_first(e: &ErrorInputs, left: &CMat) -> SectorKernel {
    let n = e.n;
    let a = CMat::from_fn(n * n, n, |row, x| left[(row / n, x)] * e.sh[(row % n, x)]);
    let phibar: Vec<Complex64> = e.phi.iter().map(|z| z.conj()).collect();
    let b = matmul(&matmul(&e.v, &diag(&phibar)), &e.sh.transpose());
    let full = matmul(&a, &b) * Complex64::new(e.dx * e.dx * e.cubic_prefactor(), 0.0);
    SectorKernel { order: 3, n, weight: e.dx, values: full.transpose().iter().copied().collect() }
}

/// Cubic term from `φ(x2) b*_{x1} b*_{x2} b_{x1}`:
/// `Σ v(x1−x2) φ(x2) L(y1,x1) R(y2,x2) sh(y3,x1)`.
fn cubic_tensor_second(e: &ErrorInputs, left: &CMat, right: &CMat) -> SectorKernel {
    let n = e.n;
    let a = CMat::from_fn(n * n, n, |row, x| left[(row / n, x)] * e.sh[(row % n, x)]);
    let d = matmul(&matmul(&e.v, &diag(&e.phi)), &right.transpose());
    let full = matmul(&a, &d) * Complex64::new(e.dx * e.dx * e.cubic_prefactor(), 0.0);
    // full[(y1,y3), y2] → (y1,y2,y3)
    let mut out = SectorKernel::zeros(3, n, e.dx);
    for r in 0..n * n {
        for y2 in 0..n {
            let (y1, y3) = (r / n, r % n);
            out.values[(y1 * n + y2) * n + y3] = full[(r, y2)];
        }
    }
    out
}

pub const QUARTIC_LABELS: [&str; 7] = ["quartic-a", "quartic-b", "quartic-c", "quartic-d", "quartic-e", "quartic-f", "quartic-g"];
pub const CUBIC_I_LABELS: [&str; 3] = ["cubicI-a", "cubicI-b", "cubicI-c"];
pub const CUBIC_II_LABELS: [&str; 5] = ["cubicII-a", "cubicII-b", "cubicII-c", "cubicII-d", "cubicII-e"];
pub const QUADRATIC_LABELS: [&str; 6] = ["quadratic-1", "quadratic-2", "quadratic-3", "quadratic-4", "quadratic-5", "quadratic-6"];
pub const QUARTIC_IRREDUCIBLE_LABELS: [&str; 4] = ["main-quartic-irred", "quartic-irred-1", "quartic-irred-2", "quartic-irred-3"];
pub const CUBIC_IRREDUCIBLE_LABELS: [&str; 6] =
    ["main-cubic-irred", "cubic-irred-1", "cubic-irred-2", "cubic-irred-3", "cubic-irred-4", "cubic-irred-5"];
pub const LINEAR_LABELS: [&str; 2] = ["linear-from-cubicI", "linear-from-cubicII"];

/// Quartic contributions: the 4-particle kernel, the six quadratic kernels
/// and the vacuum number.
#[derive(Debug, Clone)]
pub struct QuarticTerms {
    pub sector4: SectorKernel,
    /// `quadratic-1` … `quadratic-6`.
    pub quadratic: Vec<SectorKernel>,
    /// `(quartic-d, quartic-g)` vacuum numbers.
    pub vacuum_d: Complex64,
    pub vacuum_g: Complex64,
    /// `δ/p` expansion of the 4-particle kernel.
    pub irreducible: Vec<SectorKernel>,
}

impl QuarticTerms {
    pub fn sector2(&self) -> SectorKernel {
        self.quadratic.iter().skip(1).fold(self.quadratic[0].clone(), |acc, k| acc.add(k))
    }
    pub fn vacuum(&self) -> Complex64 {
        self.vacuum_d + self.vacuum_g
    }
}

pub fn quartic_kernels(e: &ErrorInputs) -> Result<QuarticTerms> {
    check_size(e.n, MAX_N_QUARTIC, "4-argument")?;
    let c = Contractions::new(e);
    let (chbar, ch) = (e.chbar(), e.ch());
    let dx = Complex64::new(e.dx, 0.0);
    let dx2 = dx * dx;
    let q = Complex64::new(e.quartic_prefactor(), 0.0);
    let st = e.sh.transpose();
    let w = hadamard(&c.ssq, &e.v);
    let q1 = matmul(&matmul(&chbar, &diag(&c.u)), &st) * dx * q;
    let q2 = matmul(&matmul(&chbar, &w.transpose()), &e.sh) * dx2 * q;
    let q3 = q2.clone();
    let q4 = q1.clone();
    let q5 = matmul(&matmul(&e.sh, &hadamard(&c.c12, &e.v)), &e.sh) * dx2 * q;
    let q6 = matmul(&matmul(&chbar, &hadamard(&c.c34, &e.v)), &ch) * dx2 * q;
    let quadratic = [q1, q2, q3, q4, q5, q6].iter().map(|m| SectorKernel::from_matrix(m, e.dx)).collect();

    let mut vd = ZERO;
    let mut vg = ZERO;
    for x1 in 0..e.n {
        for x2 in 0..e.n {
            let v = e.v[(x1, x2)];
            vd += v * (c.ssq[(x1, x1)] * c.ssq[(x2, x2)] + c.ssq[(x1, x2)] * c.ssq[(x2, x1)]);
            vg += v * c.c12[(x1, x2)] * c.c34[(x1, x2)];
        }
    }
    let delta = e.delta();
    let pbar = linalg::conj(&e.p);
    let irreducible = vec![
        quartic_tensor(e, &delta, &delta),
        quartic_tensor(e, &delta, &pbar),
        quartic_tensor(e, &pbar, &delta),
        quartic_tensor(e, &pbar, &pbar),
    ];
    Ok(QuarticTerms {
        sector4: quartic_tensor(e, &chbar, &chbar),
        quadratic,
        vacuum_d: vd * dx2 * q,
        vacuum_g: vg * dx2 * q,
        irreducible,
    })
}

/// Cubic contributions: the two 3-particle kernels and six linear kernels.
#[derive(Debug, Clone)]
pub struct CubicTerms {
    /// From `φ̄ b*bb` (cubicI-b) and `φ b*b*b` (cubicII-c).
    pub sector3_first: SectorKernel,
    pub sector3_second: SectorKernel,
    /// Linear kernels in the order of the two linear lists.
    pub linear: Vec<SectorKernel>,
    pub irreducible: Vec<SectorKernel>,
}

impl CubicTerms {
    pub fn sector3(&self) -> SectorKernel {
        self.sector3_first.add(&self.sector3_second)
    }
    pub fn sector1(&self) -> SectorKernel {
        self.linear.iter().skip(1).fold(self.linear[0].clone(), |acc, k| acc.add(k))
    }
}

pub fn cubic_kernels(e: &ErrorInputs) -> Result<CubicTerms> {
    check_size(e.n, MAX_N_CUBIC, "3-argument")?;
    let c = Contractions::new(e);
    let chbar = e.chbar();
    let dx = Complex64::new(e.dx, 0.0);
    let dx2 = dx * dx;
    let r = Complex64::new(e.cubic_prefactor(), 0.0);
    let phi = DVector::from_column_slice(&e.phi);
    let phibar = phi.map(|z| z.conj());
    let w = hadamard(&c.ssq, &e.v);
    let u = DVector::from_column_slice(&c.u);
    let l1 = &e.sh * phibar.component_mul(&u) * dx * r;
    let l2 = &e.sh * (&w * &phibar) * dx2 * r;
    let l3 = &chbar * (hadamard(&c.c34, &e.v) * &phibar) * dx2 * r;
    let l4 = &chbar * (w.transpose() * &phi) * dx2 * r;
    let l5 = &chbar * phi.component_mul(&u) * dx * r;
    let l6 = &e.sh * (hadamard(&c.c12, &e.v) * &phi) * dx2 * r;
    let linear = [l1, l2, l3, l4, l5, l6].iter().map(|v| SectorKernel::from_vector(v, e.dx)).collect();
    let delta = e.delta();
    let pbar = linalg::conj(&e.p);
    let irreducible = vec![
        cubic_tensor_second(e, &delta, &delta),
        cubic_tensor_first(e, &delta),
        cubic_tensor_second(e, &pbar, &delta),
        cubic_tensor_second(e, &delta, &pbar),
        cubic_tensor_first(e, &pbar),
        cubic_tensor_second(e, &pbar, &pbar),
    ];
    Ok(CubicTerms {
        sector3_first: cubic_tensor_first(e, &chbar),
        sector3_second: cubic_tensor_second(e, &chbar, &chbar),
        linear,
        irreducible,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorBreakdown {
    /// Fock norm of each labelled term applied to the vacuum, with its
    /// `N^{-1/2}` or `N^{-1}` prefactor; irreducible pieces are plain `L²` norms.
    pub terms: BTreeMap<String, f64>,
    /// `sectors[j]` is the Fock norm of the `j`-particle component, `j = 1..4`;
    /// `sectors[0]` is `|vacuum amplitude|`, which is a phase and not counted.
    pub sectors: [f64; 5],
    /// `N^{-1/2}‖e^B[A,V]e^{−B}|0⟩‖`.
    pub cubic_norm: f64,
    /// `N^{-1}‖e^B V e^{−B}|0⟩‖` without the vacuum component.
    pub quartic_norm: f64,
    /// Sectors 1–4 in quadrature.
    pub total: f64,
}

pub fn breakdown(quartic: &QuarticTerms, cubic: &CubicTerms) -> ErrorBreakdown {
    let mut terms = BTreeMap::new();
    let quad = &quartic.quadratic;
    let mut put = |k: &str, v: f64| {
        terms.insert(k.to_string(), v);
    };
    put("quartic-a", quad[0].add(&quad[1]).fock_norm());
    put("quartic-b", quad[2].add(&quad[3]).fock_norm());
    put("quartic-c", quartic.sector4.fock_norm());
    put("quartic-d", quartic.vacuum_d.norm());
    put("quartic-e", quad[4].fock_norm());
    put("quartic-f", quad[5].fock_norm());
    put("quartic-g", quartic.vacuum_g.norm());
    for (label, k) in QUADRATIC_LABELS.iter().zip(quad) {
        put(label, k.fock_norm());
    }
    for (label, k) in QUARTIC_IRREDUCIBLE_LABELS.iter().zip(&quartic.irreducible) {
        put(label, k.l2_norm());
    }
    let lin = &cubic.linear;
    put("cubicI-a", lin[0].add(&lin[1]).l2_norm());
    put("cubicI-b", cubic.sector3_first.fock_norm());
    put("cubicI-c", lin[2].l2_norm());
    put("cubicII-a", lin[4].l2_norm());
    put("cubicII-b", lin[3].l2_norm());
    put("cubicII-c", cubic.sector3_second.fock_norm());
    put("cubicII-d", 0.0);
    put("cubicII-e", lin[5].l2_norm());
    put("linear-from-cubicI", lin[0].add(&lin[1]).add(&lin[2]).l2_norm());
    put("linear-from-cubicII", lin[3].add(&lin[4]).add(&lin[5]).l2_norm());
    for (label, k) in CUBIC_IRREDUCIBLE_LABELS.iter().zip(&cubic.irreducible) {
        put(label, k.l2_norm());
    }
    let sectors = [
        quartic.vacuum().norm(),
        cubic.sector1().fock_norm(),
        quartic.sector2().fock_norm(),
        cubic.sector3().fock_norm(),
        quartic.sector4.fock_norm(),
    ];
    let cubic_norm = sectors[1].hypot(sectors[3]);
    let quartic_norm = sectors[2].hypot(sectors[4]);
    ErrorBreakdown { terms, sectors, cubic_norm, quartic_norm, total: cubic_norm.hypot(quartic_norm) }
}

/// `‖E|0⟩‖_F` from a breakdown (sectors summed in quadrature).
pub fn fock_norm_e(b: &ErrorBreakdown) -> f64 {
    b.sectors[1..].iter().map(|s| s * s).sum::<f64>().sqrt()
}

/// Every kernel at once.
pub fn evaluate(e: &ErrorInputs) -> Result<(QuarticTerms, CubicTerms, ErrorBreakdown)> {
    let q = quartic_kernels(e)?;
    let c = cubic_kernels(e)?;
    let b = breakdown(&q, &c);
    Ok((q, c, b))
}

/// `μ₀ = ½∫∫v_N(x−y)|φ(x)|²|φ(y)|²`.
pub fn mu0(phi: &Field, v: &Field) -> Result<f64> {
    let rho = phi.abs_sq();
    let conv = convolve(v, &rho)?;
    Ok(0.5 * rho.inner(&conv).re)
}

/// `∫{(1/2i)(φφ̄_t − φ̄φ_t) − |∇φ|²} − ½∫∫v|φ|²|φ|²`, valid off shell.
pub fn mu0_off_shell(phi: &Field, phi_t: &Field, v: &Field) -> Result<f64> {
    let grid = &phi.grid;
    let time: Complex64 = phi
        .values
        .iter()
        .zip(&phi_t.values)
        .map(|(p, pt)| (p * pt.conj() - p.conj() * pt) / Complex64::new(0.0, 2.0))
        .sum::<Complex64>()
        * grid.dx();
    let grad: f64 = (0..grid.dim()).map(|a| phi.gradient(a).abs_sq().integral().re).sum();
    Ok(time.re - grad - mu0(phi, v)?)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Mu1 {
    /// `−¼Tr(ch̄⁻¹∘m∘sh̄ + sh∘m̄∘ch̄⁻¹)`.
    pub trace_term: f64,
    /// The three `(1/2N)∫∫…v_N…` summands.
    pub shsh_offdiag: f64,
    pub shsh_diag: f64,
    pub shch: f64,
    pub total: f64,
    /// The trace summand with the other association order.
    pub trace_term_cyclic: f64,
}

pub fn mu1(sh: &Kernel, ch: &DiagonalPlusKernel, m: &Kernel, v: &Field, n_particles: f64) -> Result<Mu1> {
    let chbar_inv = kernel::invert_ch(&ch.conj())?;
    let a = chbar_inv.compose_left(&m.compose(&sh.conj()));
    let b = chbar_inv.compose_right(&sh.compose(&m.conj()));
    let trace_term = -0.25 * (a.trace() + b.trace()).re;
    let a2 = chbar_inv.compose_right(&m.compose(&sh.conj()));
    let b2 = chbar_inv.compose_left(&sh.compose(&m.conj()));
    let trace_term_cyclic = -0.25 * (a2.trace() + b2.trace()).re;

    let grid = &v.grid;
    let n = grid.len();
    let dx = grid.dx();
    let ssq = sh.conj().compose(sh).values;
    let chbar_pts = ch.conj().part.values.clone() + linalg::identity(n) * (ch.delta.conj() / dx);
    let sbar = linalg::conj(&sh.values);
    let c12 = matmul(&sbar, &chbar_pts) * Complex64::new(dx, 0.0);
    let c34 = matmul(&chbar_pts, &sh.values) * Complex64::new(dx, 0.0);
    let (mut off, mut dia, mut shch) = (ZERO, ZERO, ZERO);
    for x1 in 0..n {
        for x2 in 0..n {
            let vv = v.values[grid.diff_index(x1, x2)].re;
            off += vv * ssq[(x2, x1)] * ssq[(x1, x2)];
            dia += vv * ssq[(x1, x1)].conj() * ssq[(x2, x2)];
            shch += vv * c12[(x1, x2)] * c34[(x1, x2)];
        }
    }
    let q = dx * dx / (2.0 * n_particles);
    let (off, dia, shch) = ((off * q).re, (dia * q).re, (shch * q).re);
    Ok(Mu1 { trace_term, shsh_offdiag: off, shsh_diag: dia, shch, total: trace_term + off + dia + shch, trace_term_cyclic })
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct PhaseLedger {
    pub mu0: f64,
    pub mu1: f64,
    /// Accumulated `∫(μ₀ + N^{-1}μ₁)dt`.
    pub chi: f64,
}

impl PhaseLedger {
    pub fn start(mu0: f64, mu1: f64) -> Self {
        PhaseLedger { mu0, mu1, chi: 0.0 }
    }

    /// Trapezoidal update with the values at the end of a step `dt`.
    pub fn accumulate(&mut self, mu0: f64, mu1: f64, n_particles: f64, dt: f64) {
        let old = self.mu0 + self.mu1 / n_particles;
        let new = mu0 + mu1 / n_particles;
        self.chi += 0.5 * dt * (old + new);
        self.mu0 = mu0;
        self.mu1 = mu1;
    }
}

/// Result of the dense evaluation on a truncated Fock space.
#[derive(Debug, Clone, Serialize)]
pub struct DenseComparison {
    pub modes: usize,
    pub cap: usize,
    /// Sector norms of the dense vector (index = particle number).
    pub dense_sectors: [f64; 5],
    /// Sector norms of the mode-projected grid kernels.
    pub grid_sectors: [f64; 5],
    /// Largest componentwise difference between the two vectors.
    pub max_component_diff: f64,
    /// Norm of the dense vector in sectors `5..=cap/2` (must vanish; levels
    /// near the cap carry truncation error and are excluded).
    pub leakage: f64,
    pub dense_total: f64,
    pub grid_total: f64,
}

/// Apply `a*_{i1}…a*_{ij}` products weighted by `coeffs` to the vacuum.
fn vector_from_sector(space: &TruncatedFock, k: &SectorKernel) -> DVector<Complex64> {
    let m = k.n;
    let mut out = DVector::zeros(space.dim());
    for (flat, c) in k.values.iter().enumerate() {
        if *c == ZERO {
            continue;
        }
        let mut v = space.vacuum();
        let mut rem = flat;
        for a in 0..k.order {
            let stride = m.pow((k.order - 1 - a) as u32);
            v = space.apply_creation(rem / stride, &v);
            rem %= stride;
        }
        out += v * *c;
    }
    out
}

/// Dense oracle: builds `N^{-1/2}[A,V] + N^{-1}V` from its mode coefficients,
/// conjugates with `e^{B(K)}` on an `M`-mode Fock space and compares with the
/// mode projection of the grid kernels. `k_modes` are the pair coefficients of
/// a band-limited `k`; `phi`, `v` live on the basis grid.
pub fn dense_comparison(basis: &ModeBasis, k_modes: &CMat, phi: &Field, v: &Field, n_particles: f64, cap: usize) -> Result<DenseComparison> {
    let m = basis.len();
    let grid = basis.grid().clone();
    let k_grid = basis.embed_pair(k_modes);
    let (sh, ch) = kernel::sh_ch_of(&k_grid)?;
    let inputs = ErrorInputs::new(&sh, &ch.part, phi, v, n_particles)?;
    let (quartic, cubic, _) = evaluate(&inputs)?;

    let ebar = linalg::conj(&mode_samples(basis));
    let sectors = [
        None,
        Some(cubic.sector1().contract_each(&ebar)),
        Some(quartic.sector2().contract_each(&ebar)),
        Some(cubic.sector3().contract_each(&ebar)),
        Some(quartic.sector4.contract_each(&ebar)),
    ];
    let space = TruncatedFock::new(m, cap)?;
    let mut grid_vec = space.vacuum() * quartic.vacuum();
    let mut grid_sectors = [quartic.vacuum().norm(), 0.0, 0.0, 0.0, 0.0];
    for (j, s) in sectors.iter().enumerate().skip(1) {
        let s = s.as_ref().unwrap();
        let v = vector_from_sector(&space, s);
        grid_sectors[j] = space.sector_norm(&v, j);
        grid_vec += v;
    }

    // Mode coefficients of the cubic and quartic polynomials.
    let e = mode_samples(basis);
    let eb = linalg::conj(&e);
    let dx = grid.dx();
    let n = grid.len();
    let vpt = |x1: usize, x2: usize| v.values[grid.diff_index(x1, x2)].re;
    let mut quart = vec![ZERO; m.pow(4)];
    let mut t1 = vec![ZERO; m.pow(3)];
    let mut t2 = vec![ZERO; m.pow(3)];
    for x1 in 0..n {
        for x2 in 0..n {
            let w = vpt(x1, x2) * dx * dx;
            if w == 0.0 {
                continue;
            }
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        t1[(i * m + j) * m + k] += eb[(i, x1)] * e[(j, x1)] * e[(k, x2)] * phi.values[x2].conj() * w;
                        t2[(i * m + j) * m + k] += eb[(i, x2)] * eb[(j, x1)] * e[(k, x1)] * phi.values[x2] * w;
                        for l in 0..m {
                            quart[((i * m + j) * m + k) * m + l] += eb[(i, x1)] * eb[(j, x2)] * e[(k, x1)] * e[(l, x2)] * w;
                        }
                    }
                }
            }
        }
    }
    let big = space.extended(4)?;
    let psi = big.embed(&fock::exp_pair_apply(&space, &(-k_modes), &space.vacuum()));
    let mut chi = DVector::zeros(big.dim());
    let r = n_particles.powf(-0.5);
    let qn = 0.5 / n_particles;
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let (a1, a2) = (t1[(i * m + j) * m + k], t2[(i * m + j) * m + k]);
                let ak = big.apply_annihilation(k, &psi);
                if a1 != ZERO {
                    chi += big.apply_creation(i, &big.apply_annihilation(j, &ak)) * (a1 * r);
                }
                if a2 != ZERO {
                    chi += big.apply_creation(i, &big.apply_creation(j, &ak)) * (a2 * r);
                }
                for l in 0..m {
                    let c = quart[((i * m + j) * m + k) * m + l];
                    if c != ZERO {
                        let x = big.apply_annihilation(k, &big.apply_annihilation(l, &psi));
                        chi += big.apply_creation(i, &big.apply_creation(j, &x)) * (c * qn);
                    }
                }
            }
        }
    }
    let omega_big = fock::exp_pair_apply(&big, k_modes, &chi);
    let dense_sectors = [0, 1, 2, 3, 4].map(|j| big.sector_norm(&omega_big, j));
    let low = space.sub_cap_dim(4);
    let mid = big.sub_cap_dim(cap / 2);
    let leakage = omega_big.rows(low, mid - low).norm();
    let max_component_diff = (0..low).map(|i| (omega_big[i] - grid_vec[i]).norm()).fold(0.0, f64::max);
    let total = |s: &[f64; 5]| s[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(DenseComparison {
        modes: m,
        cap,
        dense_total: total(&dense_sectors),
        grid_total: total(&grid_sectors),
        dense_sectors,
        grid_sectors,
        max_component_diff,
        leakage,
    })
}

fn mode_samples(basis: &ModeBasis) -> CMat {
    let grid = basis.grid();
    let norm = grid.box_length().sqrt().recip();
    CMat::from_fn(basis.len(), grid.n(), |j, x| Complex64::from_polar(norm, basis.wavenumbers()[j] * grid.position(x)[0]))
}

/// Parameters of the `N`-scaling sweep.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct ScalingConfig {
    pub n: usize,
    pub box_length: f64,
    pub profile: Profile,
    pub beta: f64,
    pub n_list: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub packet_amplitude: f64,
    pub packet_center: f64,
    pub packet_width: f64,
    pub packet_momentum: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingPoint {
    pub n_particles: f64,
    pub beta: f64,
    pub cubic_norm: f64,
    pub quartic_norm: f64,
    pub total: f64,
    pub breakdown: ErrorBreakdown,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingResult {
    pub points: Vec<ScalingPoint>,
    pub cubic_fit: LinearFit,
    pub quartic_fit: LinearFit,
    pub cubic_interval: (f64, f64),
    pub quartic_interval: (f64, f64),
    /// `(dβ − 1)/2` and `dβ − 1`.
    pub predicted_cubic: f64,
    pub predicted_quartic: f64,
}

/// Run Hartree + pair evolution to `t_end` for one `N` and evaluate the error norms.
pub fn scaling_point(cfg: &ScalingConfig, n_particles: f64) -> Result<ScalingPoint> {
    let grid = Grid::new(1, cfg.n, cfg.box_length)?;
    check_size(grid.len(), MAX_N_QUARTIC, "4-argument")?;
    let pot = scaled_potential(cfg.profile, &grid, n_particles, cfg.beta)?;
    let phi = gaussian_packet(&grid, cfg.packet_amplitude, [cfg.packet_center, 0.0, 0.0], [cfg.packet_momentum, 0.0, 0.0], cfg.packet_width);
    let hartree = HartreeState::new(phi, std::sync::Arc::new(pot))?;
    let mut run = PairRun::new(hartree, false);
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    run.advance(cfg.dt, steps)?;
    let (sh, ch) = pair::first_order_pair(&run.state.s2)?;
    let st = &run.state.hartree;
    let inputs = ErrorInputs::new(&sh.symmetrized(), &ch.part, &st.phi, &st.potential.scaled, n_particles)?;
    let (_, _, b) = evaluate(&inputs)?;
    Ok(ScalingPoint { n_particles, beta: cfg.beta, cubic_norm: b.cubic_norm, quartic_norm: b.quartic_norm, total: b.total, breakdown: b })
}

pub fn scaling_study(cfg: &ScalingConfig) -> Result<ScalingResult> {
    if cfg.n_list.len() < 3 {
        return Err(Error::Fit(format!("the N sweep needs at least 3 points, got {}", cfg.n_list.len())));
    }
    let points: Vec<ScalingPoint> = cfg.n_list.par_iter().map(|&n| scaling_point(cfg, n)).collect::<Result<_>>()?;
    let x: Vec<f64> = points.iter().map(|p| p.n_particles.ln()).collect();
    let fit_of = |f: &dyn Fn(&ScalingPoint) -> f64| -> Result<LinearFit> {
        let y: Vec<f64> = points.iter().map(|p| f(p).ln()).collect();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Fit("error norm vanished; no exponent to fit".into()));
        }
        fit::linear(&x, &y)
    };
    let cubic_fit = fit_of(&|p| p.cubic_norm)?;
    let quartic_fit = fit_of(&|p| p.quartic_norm)?;
    let np = points.len();
    Ok(ScalingResult {
        cubic_interval: cubic_fit.slope_interval(np),
        quartic_interval: quartic_fit.slope_interval(np),
        predicted_cubic: (cfg.beta - 1.0) / 2.0,
        predicted_quartic: cfg.beta - 1.0,
        points,
        cubic_fit,
        quartic_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::tests::random_k;
    use crate::linalg::ONE;
    use crate::random::random_field;
    use std::sync::Arc;

    fn inputs(n: usize, seed: u64, size: f64) -> (ErrorInputs, Field, Field) {
        let grid = Grid::new(1, n, 8.0).unwrap();
        let k = random_k(n, grid.dx(), size, seed);
        let (sh, ch) = kernel::sh_ch_of(&k).unwrap();
        let phi = random_field(&grid, seed + 1);
        let v = Profile::Gaussian { width: 1.0, height: 1.0 }.sample(&grid);
        (ErrorInputs::new(&sh, &ch.part, &phi, &v, 10.0).unwrap(), phi, v)
    }

    fn brute_quartic(e: &ErrorInputs) -> Vec<Complex64> {
        let n = e.n;
        let cb = e.chbar();
        let mut out = vec![ZERO; n.pow(4)];
        for y1 in 0..n {
            for y2 in 0..n {
                for y3 in 0..n {
                    for y4 in 0..n {
                        let mut acc = ZERO;
                        for x1 in 0..n {
                            for x2 in 0..n {
                                acc += cb[(y1, x1)] * cb[(y2, x2)] * e.v[(x1, x2)] * e.sh[(y3, x1)] * e.sh[(x2, y4)];
                            }
                        }
                        out[((y1 * n + y2) * n + y3) * n + y4] = acc * e.dx * e.dx * e.quartic_prefactor();
                    }
                }
            }
        }
        out
    }

    #[test]
    fn quartic_kernel_matches_loops() {
        let (e, _, _) = inputs(8, 3, 0.5);
        let q = quartic_kernels(&e).unwrap();
        let brute = brute_quartic(&e);
        let diff = q.sector4.values.iter().zip(&brute).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-10 * q.sector4.values.iter().map(|z| z.norm()).fold(0.0, f64::max));
        let sum = q.irreducible.iter().skip(1).fold(q.irreducible[0].clone(), |a, k| a.add(k));
        assert!(sum.max_abs_diff(&q.sector4) < 1e-10 * (1.0 + q.sector4.l2_norm()));
    }

    #[test]
    fn cubic_kernels_match_loops() {
        let (e, _, _) = inputs(8, 4, 0.5);
        let c = cubic_kernels(&e).unwrap();
        let n = e.n;
        let cb = e.chbar();
        let pref = e.dx * e.dx * e.cubic_prefactor();
        let mut worst: f64 = 0.0;
        for y1 in 0..n {
            for y2 in 0..n {
                for y3 in 0..n {
                    let (mut a, mut b) = (ZERO, ZERO);
                    for x1 in 0..n {
                        for x2 in 0..n {
                            let v = e.v[(x1, x2)];
                            a += v * e.phi[x2].conj() * cb[(y1, x1)] * e.sh[(y2, x1)] * e.sh[(y3, x2)];
                            b += v * e.phi[x2] * cb[(y1, x1)] * cb[(y2, x2)] * e.sh[(y3, x1)];
                        }
                    }
                    let idx = (y1 * n + y2) * n + y3;
                    worst = worst.max((c.sector3_first.values[idx] - a * pref).norm());
                    worst = worst.max((c.sector3_second.values[idx] - b * pref).norm());
                }
            }
        }
        assert!(worst < 1e-10, "{worst}");
        let sum = c.irreducible.iter().skip(1).fold(c.irreducible[0].clone(), |a, k| a.add(k));
        assert!(sum.max_abs_diff(&c.sector3()) < 1e-10 * (1.0 + c.sector3().l2_norm()));
    }

    #[test]
    fn zero_pair_kernel_gives_zero_error() {
        let (e, _, _) = inputs(8, 5, 0.0);
        let (_, _, b) = evaluate(&e).unwrap();
        assert_eq!(b.total, 0.0);
        assert!(b.terms.values().all(|v| *v == 0.0));
    }

    #[test]
    fn labels_cover_the_term_list() {
        let (e, _, _) = inputs(8, 6, 0.3);
        let (_, _, b) = evaluate(&e).unwrap();
        let expected: Vec<&str> = QUARTIC_LABELS
            .iter()
            .chain(&CUBIC_I_LABELS)
            .chain(&CUBIC_II_LABELS)
            .chain(&QUADRATIC_LABELS)
            .chain(&QUARTIC_IRREDUCIBLE_LABELS)
            .chain(&CUBIC_IRREDUCIBLE_LABELS)
            .chain(&LINEAR_LABELS)
            .copied()
            .collect();
        let mut got: Vec<&str> = b.terms.keys().map(|s| s.as_str()).collect();
        let mut want = expected.clone();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn product_bound_on_main_quartic() {
        for seed in 0..5 {
            let (e, _, v) = inputs(8, 10 + seed, 0.8);
            let q = quartic_kernels(&e).unwrap();
            let vmax = v.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let sh_hs = (e.sh.iter().map(|z| z.norm_sqr()).sum::<f64>() * e.dx * e.dx).sqrt();
            assert!(q.irreducible[0].l2_norm() <= e.quartic_prefactor() * vmax * sh_hs * sh_hs * (1.0 + 1e-12));
        }
    }

    #[test]
    fn fock_norm_convention() {
        // Ψ = f⊗f gives ‖a*(f)²|0⟩‖ = √2‖f‖².
        let f = DVector::from_vec(vec![Complex64::new(0.3, 0.1), Complex64::new(-0.2, 0.4), ONE]);
        let k = SectorKernel::from_matrix(&(&f * f.transpose()), 1.0);
        assert!((k.fock_norm() - 2f64.sqrt() * f.norm_squared()).abs() < 1e-14);
        let k3 = SectorKernel { order: 3, n: 2, weight: 1.0, values: (0..8).map(|i| Complex64::new(i as f64, 0.0)).collect() };
        let p = k3.permuted(&[1, 2, 0]);
        // axis 2 of the input becomes axis 0
        assert_eq!(p.values[4], k3.values[1]);
        assert!((k3.symmetrized().symmetrized().max_abs_diff(&k3.symmetrized())) < 1e-14);
    }

    #[test]
    fn mu0_closed_forms() {
        let grid = Grid::new(1, 16, 8.0).unwrap();
        let v = Profile::Gaussian { width: 1.0, height: 1.0 }.sample(&grid);
        assert_eq!(mu0(&Field::zeros(&grid), &v).unwrap(), 0.0);
        let a = 0.7;
        let c = Field::from_fn(&grid, |_| Complex64::new(a, 0.0));
        let vint = v.integral().re;
        assert!((mu0(&c, &v).unwrap() - 0.5 * a.powi(4) * 8.0 * vint).abs() < 1e-12);
        let phi = random_field(&grid, 3);
        let mut brute = 0.0;
        for i in 0..16 {
            for j in 0..16 {
                brute += v.values[grid.diff_index(i, j)].re * phi.values[i].norm_sqr() * phi.values[j].norm_sqr();
            }
        }
        brute *= 0.5 * grid.dx() * grid.dx();
        assert!((mu0(&phi, &v).unwrap() - brute).abs() < 1e-10);
    }

    #[test]
    fn mu0_reduces_on_shell() {
        // periodic-compatible momentum so the packet has no kink at the box edge
        let grid = Grid::new(1, 64, 20.0).unwrap();
        let v = Profile::Gaussian { width: 1.0, height: 1.0 }.sample(&grid);
        let phi = gaussian_packet(&grid, 1.0, [10.0, 0.0, 0.0], [0.2 * std::f64::consts::PI, 0.0, 0.0], 1.5);
        let state = HartreeState::new(phi.clone(), Arc::new(crate::hartree::Potential { scaled: v.clone(), ..crate::hartree::Potential::zero(&grid) })).unwrap();
        let pot = state.mean_potential();
        // φ_t = i(Δφ − (v∗|φ|²)φ)
        let phi_t = Field::from_values(
            &grid,
            phi.laplacian().values.iter().zip(&phi.values).zip(&pot.values).map(|((l, p), w)| Complex64::new(0.0, 1.0) * (l - p * w.re)).collect(),
        )
        .unwrap();
        let on = mu0(&phi, &v).unwrap();
        let off = mu0_off_shell(&phi, &phi_t, &v).unwrap();
        assert!((off - on).abs() < 1e-10 * on.max(1.0), "{off} vs {on}");
    }

    #[test]
    fn mu1_vanishes_without_pairs_and_is_cyclic() {
        let grid = Grid::new(1, 16, 8.0).unwrap();
        let v = Profile::Gaussian { width: 1.0, height: 1.0 }.sample(&grid);
        let phi = random_field(&grid, 2);
        let m = pair::build_m(&phi, &v).unwrap();
        let zero = Kernel::zeros(16, grid.dx());
        let (sh0, ch0) = kernel::sh_ch_of(&zero).unwrap();
        assert_eq!(mu1(&sh0, &ch0, &m, &v, 10.0).unwrap().total, 0.0);
        let k = random_k(16, grid.dx(), 0.5, 4);
        let (sh, ch) = kernel::sh_ch_of(&k).unwrap();
        let r = mu1(&sh, &ch, &m, &v, 10.0).unwrap();
        assert!((r.trace_term - r.trace_term_cyclic).abs() < 1e-10 * (1.0 + r.trace_term.abs()));
        let e = ErrorInputs::new(&sh, &ch.part, &phi, &v, 10.0).unwrap();
        let q = quartic_kernels(&e).unwrap();
        assert!(((r.shsh_offdiag + r.shsh_diag + r.shch) - q.vacuum().re).abs() < 1e-10);
        assert!(q.vacuum().im.abs() < 1e-10);
    }

    #[test]
    fn rank_one_trace_term() {
        // sh = s·f fᵀ with real unit f, m = μ·f fᵀ: ch̄ = δ + c f fᵀ and the
        // trace term is −½ Re(μ s̄)/(1 + c) with c = cosh θ − 1.
        let grid = Grid::new(1, 16, 5.0).unwrap();
        let dx = grid.dx();
        let f: Vec<Complex64> = (0..16).map(|i| Complex64::new(((i as f64) * 0.7).sin() + 0.3, 0.0)).collect();
        let nrm = (f.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx).sqrt();
        let f: Vec<Complex64> = f.iter().map(|z| z / nrm).collect();
        let theta = 0.4;
        let k = Kernel::outer(&f, &f, dx).scale(theta);
        let (sh, ch) = kernel::sh_ch_of(&k).unwrap();
        let mu = Complex64::new(0.3, -0.2);
        let m = Kernel::outer(&f, &f, dx).scale_c(mu);
        let v = Field::zeros(&grid);
        let r = mu1(&sh, &ch, &m, &v, 4.0).unwrap();
        let expect = -0.5 * (mu * theta.sinh()).re / theta.cosh();
        assert!((r.trace_term - expect).abs() < 1e-12, "{} vs {expect}", r.trace_term);
    }

    #[test]
    fn phase_ledger_integrates_linear_data_exactly() {
        let mut p = PhaseLedger::start(1.0, 0.0);
        for i in 1..=10 {
            let t = 0.1 * i as f64;
            p.accumulate(1.0 + t, 2.0 * t, 4.0, 0.1);
        }
        // ∫₀¹ (1 + t + t/2) dt
        assert!((p.chi - 1.75).abs() < 1e-12);
    }

    #[test]
    fn dense_oracle_agrees() {
        let grid = Grid::new(1, 8, 2.0 * std::f64::consts::PI).unwrap();
        let basis = ModeBasis::lowest(&grid, 2).unwrap();
        let k = CMat::from_row_slice(2, 2, &[Complex64::new(0.15, 0.05), Complex64::new(0.05, -0.1), Complex64::new(0.05, -0.1), Complex64::new(-0.1, 0.0)]);
        let phi = Field::from_fn(&grid, |x| Complex64::new(0.4 + 0.2 * x[0].cos(), 0.1 * x[0].sin()));
        let v = Profile::Gaussian { width: 1.0, height: 1.0 }.sample(&grid);
        let c = dense_comparison(&basis, &k, &phi, &v, 5.0, 24).unwrap();
        assert!(c.max_component_diff < 1e-9, "{c:?}");
        assert!((c.dense_total - c.grid_total).abs() < 1e-9);
        assert!(c.leakage < 1e-7 * c.grid_total, "{c:?}");
        assert!(c.grid_total > 1e-3);
    }

    #[test]
    fn scaling_needs_three_points() {
        let cfg = ScalingConfig {
            n: 16,
            box_length: 10.0,
            profile: Profile::Gaussian { width: 2.0, height: 1.0 },
            beta: 0.0,
            n_list: vec![16.0, 32.0],
            t_end: 0.1,
            dt: 0.05,
            packet_amplitude: 0.5,
            packet_center: 5.0,
            packet_width: 1.5,
            packet_momentum: 0.5,
        };
        assert!(matches!(scaling_study(&cfg), Err(Error::Fit(_))));
    }

    #[test]
    fn beta_zero_scaling_is_exact() {
        let cfg = ScalingConfig {
            n: 16,
            box_length: 10.0,
            profile: Profile::Gaussian { width: 2.0, height: 1.0 },
            beta: 0.0,
            n_list: vec![16.0, 32.0, 64.0],
            t_end: 0.2,
            dt: 0.05,
            packet_amplitude: 0.5,
            packet_center: 5.0,
            packet_width: 1.5,
            packet_momentum: 0.5,
        };
        let r = scaling_study(&cfg).unwrap();
        assert!((r.cubic_fit.slope + 0.5).abs() < 1e-8, "{r:?}");
        assert!((r.quartic_fit.slope + 1.0).abs() < 1e-8);
    }
}
