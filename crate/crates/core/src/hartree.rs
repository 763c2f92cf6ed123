//! Hartree mean-field dynamics `(1/i)∂_tφ − Δφ + (v_N∗|φ|²)φ = 0` with
//! Strang splitting, plus conservation and Morawetz diagnostics.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit;
use crate::grid::{self, convolve, fft_forward, fft_inverse, Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "lowercase", deny_unknown_fields)]
pub enum Profile {
    /// `height` on `|x| ≤ width/2`.
    Box { width: f64, height: f64 },
    /// `height·exp(−|x|²/2width²)`.
    Gaussian { width: f64, height: f64 },
    /// `height·(1 − 2|x|/width)₊`.
    Triangle { width: f64, height: f64 },
}

impl Profile {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Profile::Box { width, height } => {
                if r <= 0.5 * width + 1e-12 {
                    height
                } else {
                    0.0
                }
            }
            Profile::Gaussian { width, height } => height * (-0.5 * r * r / (width * width)).exp(),
            Profile::Triangle { width, height } => height * (1.0 - 2.0 * r / width).max(0.0),
        }
    }

    /// Effective support diameter used for the resolution guard.
    pub fn diameter(&self) -> f64 {
        match *self {
            Profile::Box { width, .. } | Profile::Triangle { width, .. } => width,
            Profile::Gaussian { width, .. } => 2.0 * width,
        }
    }

    /// Sample `v` on the grid in the wrapped displacement layout.
    pub fn sample(&self, grid: &Grid) -> Field {
        self.sample_scaled(grid, 1.0, 1.0)
    }

    fn sample_scaled(&self, grid: &Grid, amp: f64, dilation: f64) -> Field {
        let values = (0..grid.len())
            .map(|i| {
                let r = grid.displacement(i).iter().map(|x| x * x).sum::<f64>().sqrt();
                Complex64::new(amp * self.eval(dilation * r), 0.0)
            })
            .collect();
        Field { grid: grid.clone(), values }
    }
}

/// `v ≥ 0`, even, and radially non-increasing on the sampled grid.
pub fn check_profile(v: &Field) -> Result<()> {
    let g = &v.grid;
    for (i, z) in v.values.iter().enumerate() {
        if z.im.abs() > 1e-14 || z.re < -1e-14 {
            return Err(Error::Potential(format!("negative or complex value at index {i}")));
        }
        let c = g.coords(i);
        let mut m = [0; 3];
        for a in 0..g.dim() {
            m[a] = (g.n() - c[a]) % g.n();
        }
        if (v.values[g.flat(m)].re - z.re).abs() > 1e-12 * (1.0 + z.re.abs()) {
            return Err(Error::Potential(format!("not even at index {i}")));
        }
    }
    let mut by_radius: Vec<(f64, f64)> = (0..g.len())
        .map(|i| (g.displacement(i).iter().map(|x| x * x).sum::<f64>().sqrt(), v.values[i].re))
        .collect();
    by_radius.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in by_radius.windows(2) {
        if w[1].0 > w[0].0 + 1e-12 && w[1].1 > w[0].1 + 1e-12 * (1.0 + w[0].1.abs()) {
            return Err(Error::Potential(format!("increases between radius {} and {}", w[0].0, w[1].0)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Potential {
    pub shape: Profile,
    pub profile: Field,
    pub n_particles: f64,
    pub beta: f64,
    pub scaled: Field,
}

impl Potential {
    pub fn zero(grid: &Grid) -> Self {
        let f = Field::zeros(grid);
        Potential {
            shape: Profile::Box { width: 0.0, height: 0.0 },
            profile: f.clone(),
            n_particles: 1.0,
            beta: 0.0,
            scaled: f,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.scaled.grid
    }
}

/// `v_N(x) = N^{dβ} v(N^β x)`; the `d`-dependent prefactor keeps `∫v_N` fixed.
pub fn scaled_potential(shape: Profile, grid: &Grid, n_particles: f64, beta: f64) -> Result<Potential> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Potential(format!("beta must lie in [0, 1], got {beta}")));
    }
    if !(n_particles >= 1.0) {
        return Err(Error::Potential(format!("N must be >= 1, got {n_particles}")));
    }
    let profile = shape.sample(grid);
    check_profile(&profile)?;
    let dil = n_particles.powf(beta);
    let diameter = shape.diameter() / dil;
    if diameter < 4.0 * grid.h() {
        return Err(Error::UnderResolved(format!(
            "scaled potential diameter {diameter:.4} spans fewer than 4 grid spacings (h = {:.4})",
            grid.h()
        )));
    }
    if diameter > grid.box_length() {
        return Err(Error::Potential(format!("scaled support {diameter:.3} exceeds the box")));
    }
    let scaled = if beta == 0.0 { profile.clone() } else { shape.sample_scaled(grid, dil.powi(grid.dim() as i32), dil) };
    Ok(Potential { shape, profile, n_particles, beta, scaled })
}

#[derive(Debug, Clone)]
pub struct HartreeState {
    pub phi: Field,
    pub t: f64,
    pub potential: Arc<Potential>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Conserved {
    pub mass: f64,
    pub momentum: Vec<f64>,
    pub energy: f64,
}

impl HartreeState {
    pub fn new(phi: Field, potential: Arc<Potential>) -> Result<Self> {
        if phi.grid != *potential.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(HartreeState { phi, t: 0.0, potential })
    }

    /// `v_N ∗ |φ|²`.
    pub fn mean_potential(&self) -> Field {
        convolve(&self.potential.scaled, &self.phi.abs_sq()).expect("grids checked at construction")
    }

    fn potential_kick(&mut self, tau: f64) {
        let v = self.mean_potential();
        for (p, w) in self.phi.values.iter_mut().zip(&v.values) {
            *p *= Complex64::new(0.0, -w.re * tau).exp();
        }
    }

    fn free_flow(&mut self, tau: f64) {
        let g = self.phi.grid.clone();
        let mut f = fft_forward(&self.phi);
        for (z, k2) in f.values.iter_mut().zip(g.k_squared()) {
            *z *= Complex64::new(0.0, -k2 * tau).exp();
        }
        self.phi = fft_inverse(&f);
    }

    /// One Strang step: half kick, exact free flow, half kick.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::Numerical(format!("time step must be positive, got {dt}")));
        }
        self.potential_kick(0.5 * dt);
        self.free_flow(dt);
        self.potential_kick(0.5 * dt);
        self.t += dt;
        if self.phi.values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical(format!("non-finite field at t = {:.6}", self.t)));
        }
        Ok(())
    }

    pub fn advance(&mut self, dt: f64, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step(dt)?;
        }
        Ok(())
    }

    pub fn conserved(&self) -> Conserved {
        conserved_quantities(self)
    }
}

pub fn conserved_quantities(state: &HartreeState) -> Conserved {
    let phi = &state.phi;
    let g = &phi.grid;
    let dx = g.dx();
    let mass = 0.5 * grid::l2(phi).powi(2);
    let mut momentum = Vec::with_capacity(g.dim());
    let mut grad_sq = 0.0;
    for a in 0..g.dim() {
        let d = phi.gradient(a);
        momentum.push(-phi.values.iter().zip(&d.values).map(|(p, q)| (p.conj() * q).im).sum::<f64>() * dx);
        grad_sq += d.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx;
    }
    let v = state.mean_potential();
    let interaction = 0.5 * v.values.iter().zip(&phi.values).map(|(w, p)| w.re * p.norm_sqr()).sum::<f64>() * dx;
    Conserved { mass, momentum, energy: grad_sq + interaction }
}

/// `ρ = ½|φ|²` and `∇·p` with `p_j = −Im(φ̄∂_jφ)`.
fn density_and_flux_divergence(phi: &Field) -> (Vec<f64>, Vec<f64>) {
    let g = &phi.grid;
    let rho: Vec<f64> = phi.values.iter().map(|z| 0.5 * z.norm_sqr()).collect();
    let mut div = vec![0.0; g.len()];
    for a in 0..g.dim() {
        let d = phi.gradient(a);
        let pj = Field {
            grid: g.clone(),
            values: phi.values.iter().zip(&d.values).map(|(p, q)| Complex64::new(-(p.conj() * q).im, 0.0)).collect(),
        };
        for (acc, z) in div.iter_mut().zip(pj.gradient(a).values) {
            *acc += z.re;
        }
    }
    (rho, div)
}

/// Interaction Morawetz functional `∫∫(∇·p(x)ρ(y) + ρ(x)∇·p(y))|x−y|`
/// by direct double sum with the minimal-image distance.
pub fn morawetz_q(state: &HartreeState, budget: usize) -> Result<f64> {
    let g = &state.phi.grid;
    let pairs = g.len().saturating_mul(g.len());
    if pairs > budget {
        return Err(Error::Resource(format!("Morawetz double sum needs {pairs} pair evaluations, budget {budget}")));
    }
    let (rho, div) = density_and_flux_divergence(&state.phi);
    let mut q = 0.0;
    for i in 0..g.len() {
        for j in 0..g.len() {
            q += (div[i] * rho[j] + rho[i] * div[j]) * g.distance(i, j);
        }
    }
    Ok(q * g.dx() * g.dx())
}

pub const DEFAULT_MORAWETZ_BUDGET: usize = 1 << 24;

/// Least-squares slope of `log sup|φ|` against `log t` over samples with `t ≥ 1`.
pub fn decay_fit(series: &[(f64, f64)]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t >= 1.0).collect();
    if pts.len() < 10 {
        return Err(Error::Fit(format!("decay fit needs at least 10 samples with t >= 1, got {}", pts.len())));
    }
    for w in pts.windows(2) {
        if w[1].1 > w[0].1 * (1.0 + 1e-9) {
            return Err(Error::Fit(format!(
                "sup norm increases between t = {:.3} and t = {:.3} (wrap-around contamination?)",
                w[0].0, w[1].0
            )));
        }
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    Ok(fit::linear(&x, &y)?.slope)
}

/// Gaussian wave packet `A·exp(−|x−x₀|²/2σ² + i p·x)` centred in the box
/// image nearest to `x₀`.
pub fn gaussian_packet(grid: &Grid, amplitude: f64, center: [f64; 3], momentum: [f64; 3], width: f64) -> Field {
    let l = grid.box_length();
    Field::from_fn(grid, |x| {
        let mut r2 = 0.0;
        let mut phase = 0.0;
        for a in 0..grid.dim() {
            let mut d = x[a] - center[a];
            d -= l * (d / l).round();
            r2 += d * d;
            phase += momentum[a] * d;
        }
        Complex64::from_polar(amplitude * (-0.5 * r2 / (width * width)).exp(), phase)
    })
}
