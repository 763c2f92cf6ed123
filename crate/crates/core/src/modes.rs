//! Restriction of grid kernels to a few plane-wave modes, and a Galerkin
//! version of the pair system that runs entirely on `M×M` matrices.
//!
//! With `e_j(x) = e^{ik_j x}/√L`, pair kernels are expanded as
//! `Σ S_ij e_i(x)e_j(y)`, one-body kernels like `g` as `Σ G_ij ē_i(x)e_j(y)`,
//! and `p̄₂` as `Σ Q_ij e_i(x)ē_j(y)`. In these coordinates every composition
//! appearing in the pair equations is an ordinary matrix product, so the
//! equations keep their form: `gᵀ∘s ↦ GᵀS`, `m∘q̄ ↦ MQ̄`, and so on.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{self, BlockDiagReport};
use crate::grid::{Field, Grid};
use crate::hartree::HartreeState;
use crate::kernel::{self, Kernel};
use crate::linalg::{self, matmul, CMat, I};
use crate::pair::{build_g, build_m, GData};

#[derive(Debug, Clone)]
pub struct ModeBasis {
    grid: Grid,
    wavenumbers: Vec<f64>,
    /// `e_j` sampled on the grid, one row per mode.
    samples: CMat,
}

impl ModeBasis {
    /// The `m` lowest modes of a one-dimensional grid, ordered `0, +1, −1, +2, …`.
    pub fn lowest(grid: &Grid, m: usize) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::Config("mode projection is implemented for d = 1".into()));
        }
        if m == 0 || m >= grid.n() {
            return Err(Error::Config(format!("mode count {m} must be in 1..{}", grid.n())));
        }
        let base = 2.0 * std::f64::consts::PI / grid.box_length();
        let wavenumbers: Vec<f64> = (0..m)
            .map(|j| {
                let q = j.div_ceil(2) as f64;
                if j % 2 == 1 { q * base } else { -q * base }
            })
            .collect();
        let norm = grid.box_length().sqrt().recip();
        let samples = CMat::from_fn(m, grid.n(), |j, x| Complex64::from_polar(norm, wavenumbers[j] * grid.position(x)[0]));
        Ok(ModeBasis { grid: grid.clone(), wavenumbers, samples })
    }

    pub fn len(&self) -> usize {
        self.wavenumbers.len()
    }
    pub fn is_empty(&self) -> bool {
        self.wavenumbers.is_empty()
    }
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn check(&self, k: &Kernel) -> Result<()> {
        if k.dim() != self.grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `φ_j = ∫ ē_j φ`.
    pub fn project_field(&self, f: &Field) -> Result<Vec<Complex64>> {
        if f.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        let dx = self.grid.dx();
        Ok((0..self.len())
            .map(|j| self.samples.row(j).iter().zip(&f.values).map(|(e, v)| e.conj() * v).sum::<Complex64>() * dx)
            .collect())
    }

    /// `∫∫ a_i(x) K(x,y) b_j(y)` for sampled mode families `a`, `b`.
    fn sandwich(&self, left: &CMat, k: &Kernel, right: &CMat) -> CMat {
        let dx = self.grid.dx();
        matmul(&matmul(left, &k.values), &right.transpose()) * Complex64::new(dx * dx, 0.0)
    }

    /// Coefficients of a pair kernel: `S_ij = ∫∫ ē_i ē_j s`.
    pub fn pair_coefficients(&self, s: &Kernel) -> Result<CMat> {
        self.check(s)?;
        let ebar = linalg::conj(&self.samples);
        Ok(self.sandwich(&ebar, s, &ebar))
    }

    /// Coefficients of a one-body kernel: `G_ij = ∫∫ e_i(x) g(x,y) ē_j(y)`.
    pub fn one_body_coefficients(&self, g: &Kernel) -> Result<CMat> {
        self.check(g)?;
        Ok(self.sandwich(&self.samples, g, &linalg::conj(&self.samples)))
    }

    /// Coefficients of `p̄₂`-type kernels: `Q_ij = ∫∫ ē_i(x) q(x,y) e_j(y)`.
    pub fn conjugate_one_body_coefficients(&self, q: &Kernel) -> Result<CMat> {
        self.check(q)?;
        Ok(self.sandwich(&linalg::conj(&self.samples), q, &self.samples))
    }

    /// `Σ S_ij e_i(x) e_j(y)` on the grid.
    pub fn embed_pair(&self, s: &CMat) -> Kernel {
        let values = matmul(&matmul(&self.samples.transpose(), s), &self.samples);
        Kernel::new(values, self.grid.dx())
    }

    /// Galerkin matrix of `g = −Δ + v∗|φ|² + E`.
    pub fn g_matrix(&self, g: &GData) -> Result<CMat> {
        let dx = self.grid.dx();
        let m = self.len();
        let mut out = self.one_body_coefficients(&g.exchange)?;
        for i in 0..m {
            for j in 0..m {
                let pot: Complex64 = (0..self.grid.n())
                    .map(|x| self.samples[(i, x)] * g.potential_diag[x] * self.samples[(j, x)].conj())
                    .sum();
                out[(i, j)] += pot * dx;
            }
            out[(i, i)] += self.wavenumbers[i] * self.wavenumbers[i];
        }
        Ok(out)
    }

    pub fn m_matrix(&self, m: &Kernel) -> Result<CMat> {
        self.pair_coefficients(m)
    }
}

/// Right-hand side of the Galerkin pair system
/// `ṡ = i(−(Gᵀs + sG) + 2M + MQ̄ + QM)`, `q̇ = i(−(Gᵀq − qGᵀ) + Ms̄ − sM̄)`.
pub fn galerkin_rhs(s: &CMat, q: &CMat, g: &CMat, m: &CMat) -> (CMat, CMat) {
    let gt = g.transpose();
    let (sb, qb, mb) = (linalg::conj(s), linalg::conj(q), linalg::conj(m));
    let ds = (-(matmul(&gt, s) + matmul(s, g)) + m * Complex64::new(2.0, 0.0) + matmul(m, &qb) + matmul(q, m)) * I;
    let dq = (-(matmul(&gt, q) - matmul(q, &gt)) + matmul(m, &sb) - matmul(s, &mb)) * I;
    (ds, dq)
}

#[derive(Debug, Clone)]
pub struct GalerkinPair {
    pub basis: ModeBasis,
    pub s: CMat,
    pub q: CMat,
    pub hartree: HartreeState,
}

impl GalerkinPair {
    pub fn new(basis: ModeBasis, hartree: HartreeState) -> Result<Self> {
        if hartree.phi.grid != basis.grid {
            return Err(Error::GridMismatch);
        }
        let m = basis.len();
        Ok(GalerkinPair { basis, s: CMat::zeros(m, m), q: CMat::zeros(m, m), hartree })
    }

    pub fn t(&self) -> f64 {
        self.hartree.t
    }

    /// Projected `(G, M)` for the current condensate.
    pub fn coefficients(&self) -> Result<(CMat, CMat)> {
        let v = &self.hartree.potential.scaled;
        let g = self.basis.g_matrix(&build_g(&self.hartree.phi, v)?)?;
        let m = self.basis.m_matrix(&build_m(&self.hartree.phi, v)?)?;
        Ok((g, m))
    }

    /// RK4 in the pair variables with `φ` sampled at `t`, `t + dt/2`, `t + dt`.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        let (g0, m0) = self.coefficients()?;
        self.hartree.step(0.5 * dt)?;
        let (g1, m1) = self.coefficients()?;
        self.hartree.step(0.5 * dt)?;
        let (g2, m2) = self.coefficients()?;
        let h = Complex64::new(dt, 0.0);
        let half = Complex64::new(0.5 * dt, 0.0);
        let (k1s, k1q) = galerkin_rhs(&self.s, &self.q, &g0, &m0);
        let (k2s, k2q) = galerkin_rhs(&(&self.s + &k1s * half), &(&self.q + &k1q * half), &g1, &m1);
        let (k3s, k3q) = galerkin_rhs(&(&self.s + &k2s * half), &(&self.q + &k2q * half), &g1, &m1);
        let (k4s, k4q) = galerkin_rhs(&(&self.s + &k3s * h), &(&self.q + &k3q * h), &g2, &m2);
        let sixth = Complex64::new(dt / 6.0, 0.0);
        self.s += (k1s + (k2s + k3s) * Complex64::new(2.0, 0.0) + k4s) * sixth;
        self.q += (k1q + (k2q + k3q) * Complex64::new(2.0, 0.0) + k4q) * sixth;
        if !self.s.iter().chain(self.q.iter()).all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Numerical(format!("Galerkin pair state blew up at t = {:.4}", self.t())));
        }
        Ok(())
    }

    /// `k` with `sh(2k) = s₂` (mode weight 1).
    pub fn pair_kernel(&self) -> Result<CMat> {
        let sym = (&self.s + self.s.transpose()) * Complex64::new(0.5, 0.0);
        let k2 = kernel::recover_k(&Kernel::new(sym, 1.0))?;
        Ok(k2.values * Complex64::new(0.5, 0.0))
    }

    /// `‖p̄₂ − s̄₂∘s₂/(…)‖`-type consistency: `(I + p̄₂)² − s̄₂s₂ = I` in mode form.
    pub fn identity_residual(&self) -> f64 {
        let m = self.basis.len();
        let c = linalg::identity(m) + &self.q;
        // (δ+p₂)² − s̄₂s₂ = δ with p₂ = q̄ in the conjugate coordinates.
        let cb = linalg::conj(&c);
        linalg::frobenius(&(matmul(&cb, &cb) - matmul(&linalg::conj(&self.s), &self.s) - linalg::identity(m)))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockDiagPoint {
    pub dt: f64,
    pub t: f64,
    pub residual: f64,
    pub noise_floor: f64,
}

/// Run the Galerkin pair system to `t_check + dt` and evaluate the block
/// residual at `t_check` from the three surrounding checkpoints.
pub fn block_diag_check(basis: &ModeBasis, hartree: &HartreeState, dt: f64, t_check: f64) -> Result<BlockDiagPoint> {
    let steps = (t_check / dt).round() as usize;
    if steps < 1 || ((steps as f64) * dt - t_check).abs() > 1e-9 * t_check.max(1.0) {
        return Err(Error::Config(format!("t_check = {t_check} must be a positive multiple of dt = {dt}")));
    }
    let mut run = GalerkinPair::new(basis.clone(), hartree.clone())?;
    for _ in 0..steps - 1 {
        run.step(dt)?;
    }
    let k_prev = run.pair_kernel()?;
    run.step(dt)?;
    let k_mid = run.pair_kernel()?;
    let (g, m) = run.coefficients()?;
    let t = run.t();
    run.step(dt)?;
    let k_next = run.pair_kernel()?;
    let BlockDiagReport { residual, noise_floor } = fock::block_diag_residual(&k_prev, &k_mid, &k_next, dt, &g, &m);
    Ok(BlockDiagPoint { dt, t, residual, noise_floor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hartree::{gaussian_packet, scaled_potential, Profile};
    use crate::pair::PairRun;
    use std::sync::Arc;

    fn setup() -> (ModeBasis, HartreeState) {
        let grid = Grid::new(1, 16, 6.0).unwrap();
        let pot = scaled_potential(Profile::Gaussian { width: 1.5, height: 1.0 }, &grid, 16.0, 0.2).unwrap();
        let phi = gaussian_packet(&grid, 1.0, [3.0, 0.0, 0.0], [0.5, 0.0, 0.0], 1.5);
        (ModeBasis::lowest(&grid, 3).unwrap(), HartreeState::new(phi, Arc::new(pot)).unwrap())
    }

    #[test]
    fn modes_are_orthonormal() {
        let (b, _) = setup();
        let gram = matmul(&b.samples, &b.samples.adjoint()) * Complex64::new(b.grid.dx(), 0.0);
        assert!(linalg::max_abs(&(gram - linalg::identity(3))) < 1e-13);
        let s = CMat::from_fn(3, 3, |i, j| Complex64::new((i + j) as f64, (i * j) as f64));
        let back = b.pair_coefficients(&b.embed_pair(&s)).unwrap();
        assert!(linalg::max_abs(&(back - s)) < 1e-12);
    }

    #[test]
    fn free_g_is_diagonal_laplacian() {
        let (b, h) = setup();
        let zero = Field::zeros(&h.phi.grid);
        let g = b.g_matrix(&build_g(&zero, &h.potential.scaled).unwrap()).unwrap();
        let k1 = 2.0 * std::f64::consts::PI / 6.0;
        let expect = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, k1 * k1, k1 * k1]).map(|x| Complex64::new(x, 0.0)));
        assert!(linalg::max_abs(&(g - expect)) < 1e-12);
    }

    #[test]
    fn galerkin_matches_grid_run_on_invariant_modes() {
        // With every grid mode kept the Galerkin system is the grid system.
        let grid = Grid::new(1, 8, 6.0).unwrap();
        let pot = scaled_potential(Profile::Gaussian { width: 2.0, height: 1.0 }, &grid, 4.0, 0.1).unwrap();
        let phi = gaussian_packet(&grid, 0.5, [3.0, 0.0, 0.0], [0.5, 0.0, 0.0], 1.5);
        let hartree = HartreeState::new(phi, Arc::new(pot)).unwrap();
        let basis = ModeBasis::lowest(&grid, 7).unwrap();
        let mut gal = GalerkinPair::new(basis.clone(), hartree.clone()).unwrap();
        let mut run = PairRun::new(hartree, false);
        for _ in 0..20 {
            gal.step(0.005).unwrap();
            run.step(0.005).unwrap();
        }
        let grid_s = basis.pair_coefficients(&run.state.s2).unwrap();
        assert!(linalg::max_abs(&grid_s) > 1e-3);
        // The Nyquist mode is dropped, so agreement is limited by its weight.
        assert!(linalg::max_abs(&(grid_s - &gal.s)) < 1e-3 * linalg::max_abs(&gal.s).max(1.0));
        assert!(gal.identity_residual() < 1e-8);
    }

    #[test]
    fn block_residual_converges_second_order() {
        let (b, h) = setup();
        let coarse = block_diag_check(&b, &h, 0.02, 0.4).unwrap();
        let fine = block_diag_check(&b, &h, 0.01, 0.4).unwrap();
        let ratio = coarse.residual / fine.residual;
        assert!(ratio > 3.0 && ratio < 5.0, "{coarse:?} {fine:?}");
    }
}
