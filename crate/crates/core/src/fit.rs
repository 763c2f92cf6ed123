//! Small least-squares fits used by the diagnostics and the scaling study.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (zero when the fit is exact or has two points).
    pub slope_stderr: f64,
    pub sse: f64,
}

impl LinearFit {
    /// Two-sided ~95% interval on the slope using Student-t quantiles.
    pub fn slope_interval(&self, points: usize) -> (f64, f64) {
        let h = t_quantile_975(points.saturating_sub(2)) * self.slope_stderr;
        (self.slope - h, self.slope + h)
    }
}

pub fn linear(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Fit(format!("need at least two paired samples, got {} and {}", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_stderr = if x.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(LinearFit { slope, intercept, slope_stderr, sse })
}

/// Least-squares `C` in `y ≈ C·f(t)` through the origin.
pub fn proportional(f: &[f64], y: &[f64]) -> f64 {
    let num: f64 = f.iter().zip(y).map(|(a, b)| a * b).sum();
    let den: f64 = f.iter().map(|a| a * a).sum();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn t_quantile_975(dof: usize) -> f64 {
    const TABLE: [f64; 10] = [f64::INFINITY, 12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262];
    match dof {
        0..=9 => TABLE[dof],
        10..=19 => 2.16,
        20..=39 => 2.05,
        _ => 1.96,
    }
}
