//! Periodic box discretization, unitary FFTs, spectral convolution and norms.
//!
//! Points sit at `x_j = j·h` on `[0, L)` per axis, row-major with the last
//! axis fastest. The forward transform is `n^{-d/2} Σ f_j e^{-2πi j·k/n}`, so
//! `fft_inverse ∘ fft_forward` is the identity and Parseval holds without
//! extra factors.

use std::fmt;
use std::io::{Read, Write};
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Clone)]
pub struct Grid {
    dim: usize,
    n: usize,
    box_length: f64,
    wavenumbers: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .field("box_length", &self.box_length)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n && self.box_length == other.box_length
    }
}

impl Grid {
    pub fn new(dim: usize, n: usize, box_length: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Grid(format!("dim must be 1, 2 or 3, got {dim}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::Grid(format!("points per axis must be a power of two >= 8, got {n}")));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::Grid(format!("box length must be positive, got {box_length}")));
        }
        let wavenumbers = (0..n)
            .map(|j| {
                let s = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                2.0 * std::f64::consts::PI * s / box_length
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Grid {
            dim,
            n,
            box_length,
            wavenumbers,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn box_length(&self) -> f64 {
        self.box_length
    }
    /// Grid spacing along one axis.
    pub fn h(&self) -> f64 {
        self.box_length / self.n as f64
    }
    /// Cell volume.
    pub fn dx(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn volume(&self) -> f64 {
        self.box_length.powi(self.dim as i32)
    }
    /// Per-axis wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Multi-index of a flat index (unused axes are zero).
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let mut c = [0; 3];
        let mut r = idx;
        for a in (0..self.dim).rev() {
            c[a] = r % self.n;
            r /= self.n;
        }
        c
    }

    pub fn flat(&self, c: [usize; 3]) -> usize {
        (0..self.dim).fold(0, |acc, a| acc * self.n + c[a])
    }

    /// Signed minimal-image offset of an axis index.
    pub fn signed(&self, j: usize) -> i64 {
        let j = (j % self.n) as i64;
        if j < (self.n / 2) as i64 {
            j
        } else {
            j - self.n as i64
        }
    }

    /// Position of a point, `x_j = j·h`.
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        let h = self.h();
        [c[0] as f64 * h, c[1] as f64 * h, c[2] as f64 * h]
    }

    /// Displacement represented by a flat index in the wrapped layout used
    /// for convolution kernels (index `j` means offset `signed(j)·h`).
    pub fn displacement(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        let h = self.h();
        let mut out = [0.0; 3];
        for a in 0..self.dim {
            out[a] = self.signed(c[a]) as f64 * h;
        }
        out
    }

    /// Minimal-image distance between two points.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (ci, cj) = (self.coords(i), self.coords(j));
        let h = self.h();
        (0..self.dim)
            .map(|a| {
                let d = self.signed((ci[a] + self.n - cj[a]) % self.n) as f64 * h;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Flat index of `i - j` (periodic).
    pub fn diff_index(&self, i: usize, j: usize) -> usize {
        let (ci, cj) = (self.coords(i), self.coords(j));
        let mut c = [0; 3];
        for a in 0..self.dim {
            c[a] = (ci[a] + self.n - cj[a]) % self.n;
        }
        self.flat(c)
    }

    /// Wave vector of a flat spectral index.
    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        let mut k = [0.0; 3];
        for a in 0..self.dim {
            k[a] = self.wavenumbers[c[a]];
        }
        k
    }

    /// `|k|²` for every spectral index.
    pub fn k_squared(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.wavevector(i).iter().map(|k| k * k).sum())
            .collect()
    }

    /// Symbol of `∂_axis` (`i k`), zeroed at the Nyquist index where the
    /// odd derivative has no real-valued representative.
    pub fn derivative_symbol(&self, axis: usize) -> Vec<Complex64> {
        (0..self.len())
            .map(|i| {
                let c = self.coords(i)[axis];
                if c == self.n / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, self.wavenumbers[c])
                }
            })
            .collect()
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        let plan = if forward { &self.fwd } else { &self.inv };
        let n = self.n;
        let total = self.len();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for axis in 0..self.dim {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            for base in 0..total {
                // `base` enumerates line starts: its coordinate along `axis` is zero.
                if !(base / stride).is_multiple_of(n) {
                    continue;
                }
                for (m, v) in line.iter_mut().enumerate() {
                    *v = data[base + m * stride];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (m, v) in line.iter().enumerate() {
                    data[base + m * stride] = *v;
                }
            }
        }
        let scale = 1.0 / (total as f64).sqrt();
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    pub fn fft_in_place(&self, data: &mut [Complex64]) {
        self.transform(data, true)
    }

    pub fn ifft_in_place(&self, data: &mut [Complex64]) {
        self.transform(data, false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<Complex64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Field { grid: grid.clone(), values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_values(grid: &Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!("expected {} values, got {}", grid.len(), values.len())));
        }
        Ok(Field { grid: grid.clone(), values })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 3]) -> Complex64) -> Self {
        Field { grid: grid.clone(), values: (0..grid.len()).map(|i| f(grid.position(i))).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|&z| f(z)).collect() }
    }

    pub fn conj(&self) -> Field {
        self.map(|z| z.conj())
    }

    pub fn abs_sq(&self) -> Field {
        self.map(|z| Complex64::new(z.norm_sqr(), 0.0))
    }

    pub fn scale(&self, c: Complex64) -> Field {
        self.map(|z| z * c)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.values.iter().all(|z| z.im.abs() <= tol)
    }

    /// `Σ f dx`.
    pub fn integral(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * self.grid.dx()
    }

    /// `Σ conj(f) g dx`.
    pub fn inner(&self, other: &Field) -> Complex64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum::<Complex64>() * self.grid.dx()
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Multiply in spectral space by `symbol`.
    pub fn apply_symbol(&self, symbol: &[Complex64]) -> Field {
        let mut f = fft_forward(self);
        for (v, s) in f.values.iter_mut().zip(symbol) {
            *v *= s;
        }
        fft_inverse(&f)
    }

    /// Spectral gradient component.
    pub fn gradient(&self, axis: usize) -> Field {
        self.apply_symbol(&self.grid.derivative_symbol(axis))
    }

    /// Spectral Laplacian.
    pub fn laplacian(&self) -> Field {
        let sym: Vec<Complex64> = self.grid.k_squared().iter().map(|k2| Complex64::new(-k2, 0.0)).collect();
        self.apply_symbol(&sym)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{} {} {}", self.grid.dim(), self.grid.n(), self.grid.box_length())?;
        write_complex(&mut w, &self.values)
    }

    pub fn read_from(mut r: impl Read) -> Result<Field> {
        let header = read_header_line(&mut r)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Shape(format!("bad field header {header:?}")));
        }
        let grid = parse_grid_header(&parts)?;
        let values = read_complex(&mut r, grid.len())?;
        Field::from_values(&grid, values)
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, o: &Field) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().zip(&o.values).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, o: &Field) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().zip(&o.values).map(|(a, b)| a - b).collect() }
    }
}

impl Mul for &Field {
    type Output = Field;
    fn mul(self, o: &Field) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().zip(&o.values).map(|(a, b)| a * b).collect() }
    }
}

pub(crate) fn read_header_line(r: &mut impl Read) -> Result<String> {
    let mut bytes = Vec::new();
    let mut b = [0u8; 1];
    loop {
        r.read_exact(&mut b)?;
        if b[0] == b'\n' {
            break;
        }
        bytes.push(b[0]);
        if bytes.len() > 256 {
            return Err(Error::Shape("header line too long".into()));
        }
    }
    String::from_utf8(bytes).map_err(|_| Error::Shape("header is not utf-8".into()))
}

pub(crate) fn parse_grid_header(parts: &[&str]) -> Result<Grid> {
    let bad = |s: &str| Error::Shape(format!("bad header token {s:?}"));
    let dim: usize = parts[0].parse().map_err(|_| bad(parts[0]))?;
    let n: usize = parts[1].parse().map_err(|_| bad(parts[1]))?;
    let l: f64 = parts[2].parse().map_err(|_| bad(parts[2]))?;
    Grid::new(dim, n, l)
}

pub(crate) fn write_complex(w: &mut impl Write, values: &[Complex64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 16);
    for z in values {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_complex(r: &mut impl Read, count: usize) -> Result<Vec<Complex64>> {
    let mut buf = vec![0u8; count * 16];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect())
}

pub fn make_grid(dim: usize, n: usize, box_length: f64) -> Result<Grid> {
    Grid::new(dim, n, box_length)
}

pub fn fft_forward(f: &Field) -> Field {
    let mut out = f.clone();
    f.grid.fft_in_place(&mut out.values);
    out
}

pub fn fft_inverse(f: &Field) -> Field {
    let mut out = f.clone();
    f.grid.ifft_in_place(&mut out.values);
    out
}

/// Periodic convolution `Σ_y v(x−y) f(y) dx`, with `v` in the wrapped
/// displacement layout.
pub fn convolve(v: &Field, f: &Field) -> Result<Field> {
    if v.grid != f.grid {
        return Err(Error::GridMismatch);
    }
    let g = &f.grid;
    let scale = (g.len() as f64).sqrt() * g.dx();
    let (vh, mut fh) = (fft_forward(v), fft_forward(f));
    for (a, b) in fh.values.iter_mut().zip(&vh.values) {
        *a *= b * scale;
    }
    Ok(fft_inverse(&fh))
}

pub fn l2(f: &Field) -> f64 {
    (f.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * f.grid.dx()).sqrt()
}

pub fn lp(f: &Field, p: f64) -> f64 {
    assert!(p >= 1.0, "lp norm needs p >= 1");
    (f.values.iter().map(|z| z.norm().powf(p)).sum::<f64>() * f.grid.dx()).powf(1.0 / p)
}

pub fn sup(f: &Field) -> f64 {
    f.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `H^s` norm through the multiplier `(1+|ξ|²)^{s/2}`.
pub fn sobolev(f: &Field, s: f64) -> f64 {
    let fh = fft_forward(f);
    let k2 = f.grid.k_squared();
    (fh.values.iter().zip(&k2).map(|(z, k)| (1.0 + k).powf(s) * z.norm_sqr()).sum::<f64>() * f.grid.dx()).sqrt()
}
