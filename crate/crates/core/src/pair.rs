//! Pair-excitation dynamics for `s₂ = sh(2k)`, `p₂ = ch(2k) − δ` and the
//! Riccati form for `ζ = (ch̄)^{-1}∘sh`.
//!
//! With `g = −Δδ + Vδ + E`, `E(x,y) = v(x−y)φ̄(x)φ(y)` and
//! `m(x,y) = −v(x−y)φ(x)φ(y)` the systems are
//!
//! ```text
//! (1/i)∂t s₂ + gᵀ∘s₂ + s₂∘g   = 2m + m∘p₂ + p̄₂∘m
//! (1/i)∂t p̄₂ + [gᵀ, p̄₂]       = m∘s̄₂ − s₂∘m̄
//! (1/i)∂t ζ  + gᵀ∘ζ + ζ∘g     = m + ζ∘m̄∘ζ
//! ```
//!
//! The −Δ part is exponentiated exactly in double-Fourier space; the bounded
//! remainder is integrated with RK4 inside a Strang splitting, with the mean
//! field frozen at the step midpoint.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit;
use crate::grid::{convolve, Field, Grid};
use crate::hartree::HartreeState;
use crate::kernel::{self, DiagonalPlusKernel, Kernel};
use crate::linalg::{self, matmul, CMat, I, ONE};

/// Unitary FFT applied in both kernel arguments.
pub fn kernel_fft(grid: &Grid, k: &CMat, forward: bool) -> CMat {
    let n = grid.len();
    let mut out = k.clone();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let tf = |b: &mut [Complex64]| if forward { grid.fft_in_place(b) } else { grid.ifft_in_place(b) };
    for j in 0..n {
        buf.copy_from_slice(out.column(j).as_slice());
        tf(&mut buf);
        out.column_mut(j).copy_from_slice(&buf);
    }
    for i in 0..n {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = out[(i, j)];
        }
        tf(&mut buf);
        for (j, b) in buf.iter().enumerate() {
            out[(i, j)] = *b;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreeKind {
    /// `−Δ_x − Δ_y` (symmetric kernels: s₂, ζ).
    S,
    /// `−Δ_x + Δ_y` (commutator: p̄₂).
    W,
}

fn free_symbol(grid: &Grid, kind: FreeKind) -> CMat {
    let k2 = grid.k_squared();
    CMat::from_fn(grid.len(), grid.len(), |i, j| match kind {
        FreeKind::S => Complex64::new(k2[i] + k2[j], 0.0),
        FreeKind::W => Complex64::new(k2[i] - k2[j], 0.0),
    })
}

/// Exact free flow `k̂ ↦ k̂·e^{−iλτ}`.
pub fn free_flow(grid: &Grid, k: &Kernel, kind: FreeKind, tau: f64) -> Kernel {
    let sym = free_symbol(grid, kind);
    let mut hat = kernel_fft(grid, &k.values, true);
    hat.zip_apply(&sym, |z, l| *z *= Complex64::new(0.0, -l.re * tau).exp());
    Kernel::new(kernel_fft(grid, &hat, false), k.weight)
}

fn laplacian_part(grid: &Grid, k: &Kernel, kind: FreeKind) -> Kernel {
    let sym = free_symbol(grid, kind);
    let mut hat = kernel_fft(grid, &k.values, true);
    hat.component_mul_assign(&sym);
    Kernel::new(kernel_fft(grid, &hat, false), k.weight)
}

/// The one-body data of `g_N` with the Laplacian kept as a symbol.
#[derive(Debug, Clone)]
pub struct GData {
    pub grid: Grid,
    /// `v_N ∗ |φ|²` (real).
    pub potential_diag: Vec<f64>,
    /// `E(x,y) = v_N(x−y)φ̄(x)φ(y)`.
    pub exchange: Kernel,
}

impl GData {
    pub fn exchange_transpose(&self) -> Kernel {
        self.exchange.transpose()
    }
}

fn pair_potential(v: &Field, i: usize, j: usize) -> f64 {
    v.values[v.grid.diff_index(i, j)].re
}

pub fn build_g(phi: &Field, v: &Field) -> Result<GData> {
    let grid = phi.grid.clone();
    let pot = convolve(v, &phi.abs_sq())?;
    let exchange = Kernel::on_grid(&grid, |i, j| pair_potential(v, i, j) * phi.values[i].conj() * phi.values[j]);
    Ok(GData { grid, potential_diag: pot.values.iter().map(|z| z.re).collect(), exchange })
}

pub fn build_m(phi: &Field, v: &Field) -> Result<Kernel> {
    if phi.grid != v.grid {
        return Err(Error::GridMismatch);
    }
    Ok(Kernel::on_grid(&phi.grid, |i, j| -pair_potential(v, i, j) * phi.values[i] * phi.values[j]))
}

fn diag_scale(k: &Kernel, left: &[f64], right: &[f64], sign: f64) -> Kernel {
    Kernel::new(CMat::from_fn(k.dim(), k.dim(), |i, j| k.values[(i, j)] * (left[i] + sign * right[j])), k.weight)
}

/// Bounded part of `gᵀ∘s + s∘g`.
fn bounded_s(s: &Kernel, g: &GData) -> Kernel {
    let v = &g.potential_diag;
    let et = g.exchange_transpose();
    &(&diag_scale(s, v, v, 1.0) + &et.compose(s)) + &s.compose(&g.exchange)
}

/// Bounded part of `[gᵀ, p]`.
fn bounded_w(p: &Kernel, g: &GData) -> Kernel {
    let v = &g.potential_diag;
    let et = g.exchange_transpose();
    &(&diag_scale(p, v, v, -1.0) + &et.compose(p)) - &p.compose(&et)
}

/// Spatial part of the S operator: `gᵀ∘s + s∘g`.
pub fn apply_s(s: &Kernel, g: &GData) -> Result<Kernel> {
    let r = s.symmetry_residual();
    if r > 1e-8 * (1.0 + s.max_abs()) {
        return Err(Error::Symmetry { what: "apply_S input", residual: r });
    }
    Ok(&laplacian_part(&g.grid, s, FreeKind::S) + &bounded_s(s, g))
}

/// Spatial part of the W operator: `[gᵀ, p]`.
pub fn apply_w(p: &Kernel, g: &GData) -> Result<Kernel> {
    let r = p.hermiticity_residual();
    if r > 1e-8 * (1.0 + p.max_abs()) {
        return Err(Error::Symmetry { what: "apply_W input", residual: r });
    }
    Ok(&laplacian_part(&g.grid, p, FreeKind::W) + &bounded_w(p, g))
}

fn axpy(a: &[Kernel], c: f64, b: &[Kernel]) -> Vec<Kernel> {
    a.iter().zip(b).map(|(x, y)| x + &y.scale(c)).collect()
}

fn rk4(y: &[Kernel], dt: f64, f: impl Fn(&[Kernel]) -> Vec<Kernel>) -> Vec<Kernel> {
    let k1 = f(y);
    let k2 = f(&axpy(y, 0.5 * dt, &k1));
    let k3 = f(&axpy(y, 0.5 * dt, &k2));
    let k4 = f(&axpy(y, dt, &k3));
    y.iter()
        .enumerate()
        .map(|(i, yi)| {
            let inc = &(&(&k1[i] + &k2[i].scale(2.0)) + &k3[i].scale(2.0)) + &k4[i];
            yi + &inc.scale(dt / 6.0)
        })
        .collect()
}

/// Bounded right-hand side of the (s₂, q = p̄₂) system.
fn pair_rhs(y: &[Kernel], g: &GData, m: &Kernel) -> Vec<Kernel> {
    let (s, q) = (&y[0], &y[1]);
    let mbar = m.conj();
    let ds = &(&(&(&m.scale(2.0) + &m.compose(&q.conj())) + &q.compose(m)) - &bounded_s(s, g));
    let dq = &(&m.compose(&s.conj()) - &s.compose(&mbar)) - &bounded_w(q, g);
    vec![ds.scale_c(I), dq.scale_c(I)]
}

/// Bounded right-hand side of the ζ equation.
fn zeta_rhs(z: &Kernel, g: &GData, m: &Kernel) -> Kernel {
    let quad = z.compose(&m.conj()).compose(z);
    (&(m + &quad) - &bounded_s(z, g)).scale_c(I)
}

/// Full time derivative of ζ (including the Laplacian).
pub fn zeta_derivative(z: &Kernel, g: &GData, m: &Kernel) -> Kernel {
    &zeta_rhs(z, g, m) - &laplacian_part(&g.grid, z, FreeKind::S).scale_c(I)
}

/// One split step of the ζ equation with frozen `g`, `m`.
pub fn step_z(zeta: &Kernel, dt: f64, g: &GData, m: &Kernel) -> Kernel {
    let z = free_flow(&g.grid, zeta, FreeKind::S, 0.5 * dt);
    let z = rk4(&[z], dt, |y| vec![zeta_rhs(&y[0], g, m)]).remove(0);
    free_flow(&g.grid, &z, FreeKind::S, 0.5 * dt)
}

/// One split step of the (s₂, p₂) system with frozen `g`, `m`.
pub fn step_pair_frozen(s2: &Kernel, p2: &Kernel, dt: f64, g: &GData, m: &Kernel) -> (Kernel, Kernel) {
    let grid = &g.grid;
    let s = free_flow(grid, s2, FreeKind::S, 0.5 * dt);
    let q = free_flow(grid, &p2.conj(), FreeKind::W, 0.5 * dt);
    let y = rk4(&[s, q], dt, |y| pair_rhs(y, g, m));
    let s = free_flow(grid, &y[0], FreeKind::S, 0.5 * dt);
    let q = free_flow(grid, &y[1], FreeKind::W, 0.5 * dt);
    (s, q.conj())
}

/// One split step of `(1/i)∂t s − (Δx+Δy)s = 2m` (the free Duhamel problem).
pub fn step_free_source(s: &Kernel, dt: f64, grid: &Grid, m: &Kernel) -> Kernel {
    let h = free_flow(grid, s, FreeKind::S, 0.5 * dt);
    let h = &h + &m.scale_c(Complex64::new(0.0, 2.0 * dt));
    free_flow(grid, &h, FreeKind::S, 0.5 * dt)
}

#[derive(Debug, Clone)]
pub struct PairState {
    pub s2: Kernel,
    pub p2: Kernel,
    pub t: f64,
    pub hartree: HartreeState,
}

#[derive(Debug, Clone)]
pub struct PairRun {
    pub state: PairState,
    /// ζ evolved alongside for the form-equivalence checks.
    pub zeta: Option<Kernel>,
    pub warnings: Vec<String>,
    /// `(t, m(t))` at every step boundary, kept when Duhamel diagnostics are requested.
    pub m_history: Option<Vec<(f64, Kernel)>>,
}

impl PairRun {
    /// Zero pair data (`k(0) = 0`).
    pub fn new(hartree: HartreeState, with_zeta: bool) -> Self {
        let g = hartree.phi.grid.clone();
        let z = Kernel::zeros(g.len(), g.dx());
        let t = hartree.t;
        PairRun {
            state: PairState { s2: z.clone(), p2: z.clone(), t, hartree },
            zeta: with_zeta.then_some(z),
            warnings: vec![],
            m_history: None,
        }
    }

    pub fn record_m(mut self) -> Result<Self> {
        let m = self.current_m()?;
        self.m_history = Some(vec![(self.state.t, m)]);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.state.hartree.phi.grid
    }

    pub fn current_g(&self) -> Result<GData> {
        build_g(&self.state.hartree.phi, &self.state.hartree.potential.scaled)
    }

    pub fn current_m(&self) -> Result<Kernel> {
        build_m(&self.state.hartree.phi, &self.state.hartree.potential.scaled)
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        let st = &mut self.state;
        st.hartree.step(0.5 * dt)?;
        let phi = &st.hartree.phi;
        let v = &st.hartree.potential.scaled;
        let g = build_g(phi, v)?;
        let m = build_m(phi, v)?;
        let (s2, p2) = step_pair_frozen(&st.s2, &st.p2, dt, &g, &m);
        if let Some(z) = &self.zeta {
            self.zeta = Some(step_z(z, dt, &g, &m));
        }
        st.hartree.step(0.5 * dt)?;
        st.t += dt;
        st.s2 = s2;
        st.p2 = p2;
        if !(st.s2.is_finite() && st.p2.is_finite()) {
            return Err(Error::Numerical(format!("non-finite pair kernel at t = {:.6}", st.t)));
        }
        let (rs, rp) = (st.s2.symmetry_residual(), st.p2.hermiticity_residual());
        if rs > 1e-6 || rp > 1e-6 {
            self.warnings.push(format!("t = {:.4}: re-symmetrized (s2 {rs:.2e}, p2 {rp:.2e})", st.t));
            st.s2 = st.s2.symmetrized();
            st.p2 = st.p2.hermitized();
        }
        if self.m_history.is_some() {
            let entry = (self.state.t, self.current_m()?);
            if let Some(h) = self.m_history.as_mut() {
                h.push(entry);
            }
        }
        Ok(())
    }

    pub fn advance(&mut self, dt: f64, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step(dt)?;
        }
        Ok(())
    }

    pub fn sample(&self) -> Result<PairSample> {
        let st = &self.state;
        let form = match &self.zeta {
            Some(z) => Some(form_equivalence(&st.s2, &st.p2, z, &self.current_g()?, &self.current_m()?)?),
            None => None,
        };
        Ok(PairSample {
            t: st.t,
            hs_norm_s2: st.s2.hs_norm(),
            hs_norm_p2: st.p2.hs_norm(),
            trace_p2_real: st.p2.trace().re,
            identity_residual: identity_residual(&st.s2, &st.p2),
            form_equivalence_residual: form.map(|f| f.max()),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairSample {
    pub t: f64,
    pub hs_norm_s2: f64,
    pub hs_norm_p2: f64,
    pub trace_p2_real: f64,
    pub identity_residual: f64,
    pub form_equivalence_residual: Option<f64>,
}

/// HS norm of `(δ+p₂)∘(δ+p₂) − s̄₂∘s₂ − δ`.
pub fn identity_residual(s2: &Kernel, p2: &Kernel) -> f64 {
    let r = &(&(&p2.scale(2.0) + &p2.compose(p2)) - &s2.conj().compose(s2));
    r.hs_norm()
}

/// Pairwise discrepancies between the three forms of the pair dynamics.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FormEquivalence {
    /// ζ reconstructed from (s₂, p₂) against the evolved ζ.
    pub pair_vs_zeta: f64,
    /// `p̄₂/2` against `sh∘sh̄` computed from ζ.
    pub pair_vs_shsh: f64,
    /// Residual of `W(sh∘sh̄) = m∘sh̄∘ch̄ − sh∘ch∘m̄` along the ζ flow.
    pub w_identity: f64,
}

impl FormEquivalence {
    pub fn max(&self) -> f64 {
        self.pair_vs_zeta.max(self.pair_vs_shsh).max(self.w_identity)
    }
}

/// `ζ = (ch̄)^{-1}∘sh` with `(sh, ch)` recovered from `s₂ = sh(2k)`.
pub fn zeta_from_pair(s2: &Kernel) -> Result<Kernel> {
    let k = kernel::recover_k(s2)?.scale(0.5);
    let (sh, ch) = kernel::sh_ch_by_doubling(&k)?;
    Ok(kernel::invert_ch(&ch.conj())?.compose_left(&sh))
}

/// `(sh, ch)` in operator form from ζ: `ch̄² = I + ZZ̄(I−ZZ̄)^{-1}`, `sh = ch̄∘ζ`.
fn sh_ch_from_zeta(zeta: &Kernel) -> Result<(CMat, CMat, CMat)> {
    let n = zeta.dim();
    let z = zeta.operator();
    let zz = matmul(&z, &linalg::conj(&z));
    let inv = linalg::inverse_guarded(&(linalg::identity(n) - &zz), kernel::MAX_CONDITION)?;
    let u = &inv - linalg::identity(n);
    let chbar = linalg::hermitian_function(&(linalg::identity(n) + &u), |l| l.max(0.0).sqrt());
    let sh = matmul(&chbar, &z);
    Ok((u, sh, linalg::conj(&chbar)))
}

pub fn form_equivalence(s2: &Kernel, p2: &Kernel, zeta: &Kernel, g: &GData, m: &Kernel) -> Result<FormEquivalence> {
    let w = s2.weight;
    let pair_vs_zeta = (&zeta_from_pair(s2)? - zeta).hs_norm();
    let (u, sh, ch) = sh_ch_from_zeta(zeta)?;
    let u_k = Kernel::from_operator(&u, w);
    let pair_vs_shsh = (&p2.conj().scale(0.5) - &u_k).hs_norm();

    // d/dt u = (I−Z)^{-1} Ż (I−Z)^{-1}, with Z = ζζ̄ in operator form.
    let n = zeta.dim();
    let zop = zeta.operator();
    let zdot = zeta_derivative(zeta, g, m).operator();
    let zz_dot = matmul(&zdot, &linalg::conj(&zop)) + matmul(&zop, &linalg::conj(&zdot));
    let inv = &u + linalg::identity(n);
    let udot = Kernel::from_operator(&matmul(&matmul(&inv, &zz_dot), &inv), w);
    let lhs = &udot.scale_c(-I) + &apply_w(&u_k.hermitized(), g)?;
    let mop = m.operator();
    let rhs = matmul(&matmul(&mop, &linalg::conj(&sh)), &linalg::conj(&ch)) - matmul(&matmul(&sh, &ch), &linalg::conj(&mop));
    let w_identity = (&lhs - &Kernel::from_operator(&rhs, w)).hs_norm();
    Ok(FormEquivalence { pair_vs_zeta, pair_vs_shsh, w_identity })
}

/// `(s₁, p₁)` of `k = ½·recover_k(s₂)`, for the trace relation.
pub fn first_order_pair(s2: &Kernel) -> Result<(Kernel, DiagonalPlusKernel)> {
    let k = kernel::recover_k(s2)?.scale(0.5);
    kernel::sh_ch_by_doubling(&k)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRelation {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub min_diag_p1: f64,
}

/// `trace(p₁∘p₁ + 2p₁)` vs `trace(s̄₁∘s₁)` and `min_x p₁(x,x)`.
pub fn trace_relation(s1: &Kernel, p1: &Kernel) -> TraceRelation {
    let lhs = (&p1.compose(p1) + &p1.scale(2.0)).trace();
    let rhs = s1.conj().compose(s1).trace();
    let min_diag_p1 = p1.diagonal().iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    TraceRelation { lhs, rhs, min_diag_p1 }
}

/// `∫₀^h e^{zv/h}dv / h` and `∫₀^h v e^{zv/h}dv / h²` without cancellation.
fn phi12(z: Complex64) -> (Complex64, Complex64) {
    if z.norm() < 0.1 {
        let (mut p1, mut p2) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        let mut zk = ONE;
        let mut fact = 1.0;
        for k in 0..16 {
            p1 += zk / (fact * (k + 1) as f64);
            p2 += zk / (fact * (k + 2) as f64);
            fact *= (k + 1) as f64;
            zk *= z;
        }
        (p1, p2)
    } else {
        let e = z.exp();
        ((e - ONE) / z, (e * (z - ONE) + ONE) / (z * z))
    }
}

/// Free-flow Duhamel solution `ŝ(T) = 2i∫₀ᵀ e^{−iλ(T−s)} m̂(s) ds` from
/// samples of `m`, integrating the oscillatory factor exactly against the
/// piecewise-linear interpolant of `m`.
pub fn duhamel_sa(grid: &Grid, history: &[(f64, Kernel)]) -> Result<Kernel> {
    if history.len() < 2 {
        return Err(Error::Fit(format!("Duhamel integral needs at least 2 samples, got {}", history.len())));
    }
    let t_end = history.last().unwrap().0;
    let lam = free_symbol(grid, FreeKind::S);
    let hats: Vec<CMat> = history.iter().map(|(_, m)| kernel_fft(grid, &m.values, true)).collect();
    let n = grid.len();
    let mut acc = CMat::zeros(n, n);
    for w in 0..history.len() - 1 {
        let (a, b) = (history[w].0, history[w + 1].0);
        let h = b - a;
        if !(h > 0.0) {
            return Err(Error::Fit("Duhamel samples must have increasing times".into()));
        }
        for j in 0..n {
            for i in 0..n {
                let l = lam[(i, j)].re;
                let (p1, p2) = phi12(Complex64::new(0.0, l * h));
                let phase = Complex64::new(0.0, -l * (t_end - a)).exp();
                let (ma, mb) = (hats[w][(i, j)], hats[w + 1][(i, j)]);
                acc[(i, j)] += phase * h * (ma * p1 + (mb - ma) * p2);
            }
        }
    }
    acc *= Complex64::new(0.0, 2.0);
    Ok(Kernel::new(kernel_fft(grid, &acc, false), grid.dx()))
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    /// Least-squares `C` in `‖s₂‖ + ‖p₂‖ ≈ C log(1+t)`.
    pub c: f64,
    pub log_sse: f64,
    /// Power-law fit `a t^b` over the tail (second half of the samples).
    pub tail_exponent: f64,
    pub power_sse: f64,
    pub pass: bool,
}

/// Fit `C log(1+t)` and decide sublinearity: fails when a tail power law
/// with exponent above 0.25 explains the tail better than the log model.
pub fn growth_report(series: &[(f64, f64, f64)]) -> Result<GrowthReport> {
    if series.len() < 20 {
        return Err(Error::Fit(format!("growth report needs at least 20 samples, got {}", series.len())));
    }
    let y: Vec<f64> = series.iter().map(|(_, s, p)| s + p).collect();
    let l: Vec<f64> = series.iter().map(|(t, _, _)| (1.0 + t).ln()).collect();
    let c = fit::proportional(&l, &y);
    let tail: Vec<usize> = (series.len() / 2..series.len()).filter(|&i| series[i].0 > 0.0 && y[i] > 0.0).collect();
    if tail.len() < 3 {
        return Err(Error::Fit("tail has too few positive samples".into()));
    }
    let lx: Vec<f64> = tail.iter().map(|&i| series[i].0.ln()).collect();
    let ly: Vec<f64> = tail.iter().map(|&i| y[i].ln()).collect();
    let pf = fit::linear(&lx, &ly)?;
    let power_sse: f64 = tail.iter().map(|&i| (y[i] - (pf.intercept + pf.slope * series[i].0.ln()).exp()).powi(2)).sum();
    let log_sse: f64 = tail.iter().map(|&i| (y[i] - c * l[i]).powi(2)).sum();
    let pass = !(pf.slope > 0.25 && power_sse < log_sse);
    Ok(GrowthReport { c, log_sse, tail_exponent: pf.slope, power_sse, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::hartree::{gaussian_packet, scaled_potential, Potential, Profile};
    use crate::random::{random_field, random_symmetric, rng, smooth_field};
    use std::sync::Arc;

    fn setup(n: usize, l: f64, n_particles: f64, beta: f64) -> HartreeState {
        let g = make_grid(1, n, l).unwrap();
        let pot = scaled_potential(Profile::Gaussian { width: 1.5, height: 1.0 }, &g, n_particles, beta).unwrap();
        let phi = gaussian_packet(&g, 1.0, [0.5 * l, 0.0, 0.0], [0.5, 0.0, 0.0], 1.5);
        HartreeState::new(phi, Arc::new(pot)).unwrap()
    }

    #[test]
    fn g_and_m_basics() {
        let g = make_grid(1, 16, 6.0).unwrap();
        let v = Profile::Gaussian { width: 0.8, height: 1.0 }.sample(&g);
        let zero = Field::zeros(&g);
        let gd = build_g(&zero, &v).unwrap();
        assert!(gd.potential_diag.iter().all(|x| *x == 0.0) && gd.exchange.max_abs() == 0.0);
        assert_eq!(build_m(&zero, &v).unwrap().max_abs(), 0.0);

        let a = Complex64::new(0.3, -0.4);
        let c = Field::from_fn(&g, |_| a);
        let gd = build_g(&c, &v).unwrap();
        let expect = v.integral().re * a.norm_sqr();
        assert!(gd.potential_diag.iter().all(|x| (x - expect).abs() < 1e-12));
        let m = build_m(&c, &v).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                assert!((m.values[(i, j)] + a * a * v.values[g.diff_index(i, j)]).norm() < 1e-14);
            }
        }
        let phi = random_field(&g, 5);
        assert!(build_g(&phi, &v).unwrap().exchange.hermiticity_residual() < 1e-12);
        assert!(build_m(&phi, &v).unwrap().symmetry_residual() < 1e-12);
    }

    #[test]
    fn free_operators_on_plane_waves() {
        let g = make_grid(1, 16, 5.0).unwrap();
        let gd = build_g(&Field::zeros(&g), &Field::zeros(&g)).unwrap();
        let (a, b) = (3usize, 14usize);
        let (xi, eta) = (g.wavenumbers()[a], g.wavenumbers()[b]);
        let pw = |i: usize, j: usize| Complex64::new(0.0, xi * g.position(i)[0] + eta * g.position(j)[0]).exp();
        let s = Kernel::on_grid(&g, |i, j| pw(i, j) + pw(j, i));
        let out = apply_s(&s, &gd).unwrap();
        assert!((&out - &s.scale(xi * xi + eta * eta)).max_abs() < 1e-10);
        assert_eq!(apply_s(&Kernel::zeros(16, g.dx()), &gd).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn apply_w_matches_dense_commutator() {
        let g = make_grid(1, 16, 5.0).unwrap();
        let v = Profile::Triangle { width: 2.0, height: 1.0 }.sample(&g);
        let phi = smooth_field(&g, 3, 1);
        let gd = build_g(&phi, &v).unwrap();
        let f = smooth_field(&g, 4, 2);
        let p = Kernel::on_grid(&g, |i, j| f.values[i] * f.values[j].conj());
        // Dense g: spectral second-difference matrix plus diagonal and exchange.
        let n = g.len();
        let mut lap = CMat::zeros(n, n);
        for j in 0..n {
            let mut e = Field::zeros(&g);
            e.values[j] = ONE;
            let col = e.laplacian();
            for i in 0..n {
                lap[(i, j)] = -col.values[i];
            }
        }
        let gop = lap + CMat::from_diagonal(&nalgebra::DVector::from_iterator(n, gd.potential_diag.iter().map(|x| Complex64::new(*x, 0.0)))) + gd.exchange.operator();
        let dense = linalg::commutator(&gop.transpose(), &p.operator());
        let got = apply_w(&p, &gd).unwrap().operator();
        assert!(linalg::max_abs(&(got - dense)) < 1e-10);
    }

    #[test]
    fn zero_forcing_stays_zero() {
        let g = make_grid(1, 16, 6.0).unwrap();
        let pot = Arc::new(Potential::zero(&g));
        let h = HartreeState::new(Field::zeros(&g), pot).unwrap();
        let mut run = PairRun::new(h, true);
        run.advance(0.05, 20).unwrap();
        assert_eq!(run.state.s2.max_abs(), 0.0);
        assert_eq!(run.state.p2.max_abs(), 0.0);
        assert_eq!(run.zeta.as_ref().unwrap().max_abs(), 0.0);
    }

    #[test]
    fn small_time_taylor() {
        let h = setup(16, 6.0, 16.0, 0.2);
        let m0 = build_m(&h.phi, &h.potential.scaled).unwrap();
        let mut run = PairRun::new(h, true);
        let dt = 1e-4;
        run.step(dt).unwrap();
        let s_expect = m0.scale_c(Complex64::new(0.0, 2.0 * dt));
        let z_expect = m0.scale_c(Complex64::new(0.0, dt));
        let scale = m0.hs_norm() * dt;
        assert!((&run.state.s2 - &s_expect).hs_norm() < 5e-3 * scale);
        assert!((run.zeta.as_ref().unwrap() - &z_expect).hs_norm() < 5e-3 * scale);
    }

    #[test]
    fn self_convergence_is_second_order() {
        let base = setup(16, 6.0, 16.0, 0.2);
        let run_to = |dt: f64| {
            let mut r = PairRun::new(base.clone(), false);
            r.advance(dt, (0.5 / dt).round() as usize).unwrap();
            r.state.s2
        };
        let reference = run_to(0.5 / 512.0);
        let e1 = (&run_to(0.5 / 16.0) - &reference).hs_norm();
        let e2 = (&run_to(0.5 / 32.0) - &reference).hs_norm();
        let ratio = e1 / e2;
        assert!(ratio > 3.5 && ratio < 4.6, "ratio {ratio}");
    }

    #[test]
    fn forms_agree_and_identity_curve_holds() {
        let mut run = PairRun::new(setup(16, 6.0, 16.0, 0.2), true);
        run.advance(0.005, 200).unwrap();
        let s = run.sample().unwrap();
        assert!(s.identity_residual < 1e-6, "{s:?}");
        assert!(s.form_equivalence_residual.unwrap() < 1e-6, "{s:?}");
        assert!(run.state.s2.symmetry_residual() < 1e-10 && run.state.p2.hermiticity_residual() < 1e-10);
        let (s1, ch) = first_order_pair(&run.state.s2).unwrap();
        let tr = trace_relation(&s1, &ch.part);
        assert!((tr.lhs - tr.rhs).norm() < 1e-10 && tr.min_diag_p1 > -1e-10);
    }

    #[test]
    fn duhamel_constant_source_closed_form() {
        let g = make_grid(1, 16, 6.0).unwrap();
        let mut r = rng(3);
        let m = Kernel::new(random_symmetric(16, &mut r), g.dx());
        let t = 1.7;
        let hist: Vec<(f64, Kernel)> = (0..=4).map(|i| (t * i as f64 / 4.0, m.clone())).collect();
        let got = duhamel_sa(&g, &hist).unwrap();
        let lam = free_symbol(&g, FreeKind::S);
        let mh = kernel_fft(&g, &m.values, true);
        let expect = CMat::from_fn(16, 16, |i, j| {
            let l = lam[(i, j)].re;
            if l == 0.0 {
                Complex64::new(0.0, 2.0 * t) * mh[(i, j)]
            } else {
                mh[(i, j)] * 2.0 * (ONE - Complex64::new(0.0, -l * t).exp()) / l
            }
        });
        let expect = kernel_fft(&g, &expect, false);
        assert!(linalg::max_abs(&(got.values - expect)) < 1e-10);
        assert!(duhamel_sa(&g, &hist[..1]).is_err());
    }

    #[test]
    fn duhamel_matches_stepping() {
        let g = make_grid(1, 16, 6.0).unwrap();
        let mut r = rng(8);
        let m0 = Kernel::new(random_symmetric(16, &mut r), g.dx()).scale(0.1);
        let m_at = |t: f64| m0.scale_c(Complex64::new(t.cos(), 0.5 * (2.0 * t).sin()));
        let dt = 1e-3;
        let steps = 1000;
        let mut s = Kernel::zeros(16, g.dx());
        let mut hist = vec![(0.0, m_at(0.0))];
        for i in 0..steps {
            let t = i as f64 * dt;
            s = step_free_source(&s, dt, &g, &m_at(t + 0.5 * dt));
            hist.push((t + dt, m_at(t + dt)));
        }
        let d = duhamel_sa(&g, &hist).unwrap();
        assert!((&d - &s).max_abs() < 1e-6, "{}", (&d - &s).max_abs());
    }

    #[test]
    fn growth_report_synthetic() {
        let log: Vec<(f64, f64, f64)> = (0..40).map(|i| {
            let t = 0.5 * i as f64;
            (t, 2.0 * (1.0 + t).ln(), (1.0 + t).ln())
        }).collect();
        let rep = growth_report(&log).unwrap();
        assert!((rep.c - 3.0).abs() < 1e-6 && rep.pass);
        let pw: Vec<(f64, f64, f64)> = (0..40).map(|i| {
            let t = 0.5 * i as f64;
            (t, t.sqrt(), 0.0)
        }).collect();
        assert!(!growth_report(&pw).unwrap().pass);
        assert!(growth_report(&log[..10]).is_err());
    }
}
