//! TOML run configuration.
//!
//! ```toml
//! experiment = "pair"          # hartree | pair | fock-verify | error-sweep
//! dim = 1
//! n = 64
//! box_length = 20.0
//! n_particles = 64.0
//! beta = 0.2
//! dt = 0.01
//! t_end = 10.0
//! sample_every = 10
//! output_dir = "out/pair"
//! seed = 7
//!
//! [potential]
//! profile = "gaussian"         # box | gaussian | triangle
//! width = 1.0
//! height = 1.0
//!
//! [phi0]
//! kind = "gaussian"            # or kind = "file", path = "phi0.field"
//! amplitude = 1.0
//! center = [10.0]
//! momentum = [0.5]
//! width = 1.5
//! ```
//!
//! Every key other than `experiment` has a default; unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::MAX_DIMENSION;
use crate::grid::{Field, Grid};
use crate::hartree::{gaussian_packet, Profile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Hartree,
    Pair,
    FockVerify,
    ErrorSweep,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Hartree => "hartree",
            Experiment::Pair => "pair",
            Experiment::FockVerify => "fock-verify",
            Experiment::ErrorSweep => "error-sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialDatum {
    Gaussian {
        #[serde(default = "one")]
        amplitude: f64,
        /// Defaults to the box centre.
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default)]
        momentum: Option<Vec<f64>>,
        #[serde(default = "one")]
        width: f64,
    },
    /// A field in the plain-text field format.
    File { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

impl Default for InitialDatum {
    fn default() -> Self {
        InitialDatum::Gaussian { amplitude: 1.0, center: None, momentum: None, width: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub momentum_drift: f64,
    pub identity: f64,
    pub form_equivalence: f64,
    pub trace_relation: f64,
    pub isomorphism: f64,
    pub bogoliubov: f64,
    pub oracle: f64,
    pub slope: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            mass_drift: 1e-10,
            energy_drift: 1e-6,
            momentum_drift: 1e-8,
            identity: 1e-6,
            form_equivalence: 1e-6,
            trace_relation: 1e-8,
            isomorphism: 1e-9,
            bogoliubov: 1e-8,
            oracle: 1e-6,
            slope: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FockSettings {
    pub modes: usize,
    pub n_max: usize,
    /// Squeezing parameter of the single-mode Bogoliubov check.
    pub theta: f64,
    pub bogoliubov_cap: usize,
    /// Random block pairs for the isomorphism check.
    pub pairs: usize,
    /// Fock cap of the dense error-term oracle.
    pub oracle_cap: usize,
    /// Grid points of the dense error-term oracle.
    pub oracle_n: usize,
    pub oracle_box_length: f64,
}

impl Default for FockSettings {
    fn default() -> Self {
        FockSettings { modes: 3, n_max: 6, theta: 0.2, bogoliubov_cap: 20, pairs: 20, oracle_cap: 18, oracle_n: 16, oracle_box_length: 8.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub n_list: Vec<f64>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings { n_list: vec![16.0, 32.0, 64.0, 128.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default = "defaults::dim")]
    pub dim: usize,
    #[serde(default = "defaults::n")]
    pub n: usize,
    #[serde(default = "defaults::box_length")]
    pub box_length: f64,
    #[serde(default = "defaults::potential")]
    pub potential: Profile,
    #[serde(default = "defaults::n_particles")]
    pub n_particles: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub phi0: InitialDatum,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    #[serde(default = "defaults::t_end")]
    pub t_end: f64,
    #[serde(default = "defaults::sample_every")]
    pub sample_every: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "defaults::output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fock: FockSettings,
    #[serde(default)]
    pub sweep: SweepSettings,
}

mod defaults {
    use super::*;
    pub fn dim() -> usize {
        1
    }
    pub fn n() -> usize {
        64
    }
    pub fn box_length() -> f64 {
        20.0
    }
    pub fn potential() -> Profile {
        Profile::Gaussian { width: 1.0, height: 1.0 }
    }
    pub fn n_particles() -> f64 {
        64.0
    }
    pub fn dt() -> f64 {
        0.01
    }
    pub fn t_end() -> f64 {
        1.0
    }
    pub fn sample_every() -> usize {
        10
    }
    pub fn output_dir() -> PathBuf {
        PathBuf::from("out")
    }
}

/// Largest grid for runs that store dense two-point kernels.
pub const MAX_PAIR_POINTS: usize = 1024;

impl RunConfig {
    /// A config with every default filled in; the error sweep gets a grid
    /// small enough for its 4-argument kernels.
    pub fn new(experiment: Experiment) -> Self {
        let mut cfg: RunConfig =
            toml::from_str(&format!("experiment = \"{}\"", experiment.name())).expect("defaults deserialize");
        if experiment == Experiment::ErrorSweep {
            cfg.n = 32;
            cfg.box_length = 10.0;
        }
        cfg
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.n, self.box_length)
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Reject out-of-range values before any computation starts.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(1..=3).contains(&self.dim) {
            return bad(format!("dim must be 1, 2 or 3, got {}", self.dim));
        }
        self.grid().map_err(|e| Error::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if !(self.n_particles >= 1.0) {
            return bad(format!("n_particles must be >= 1, got {}", self.n_particles));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be non-negative, got {}", self.t_end));
        }
        let ratio = self.t_end / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return bad(format!("t_end = {} is not a whole number of steps dt = {}", self.t_end, self.dt));
        }
        if self.sample_every == 0 {
            return bad("sample_every must be at least 1".into());
        }
        let (Profile::Box { width, height } | Profile::Gaussian { width, height } | Profile::Triangle { width, height }) = self.potential;
        if !(width > 0.0) || height < 0.0 {
            return bad(format!("potential needs width > 0 and height >= 0, got width {width}, height {height}"));
        }
        if let InitialDatum::Gaussian { width, center, momentum, .. } = &self.phi0 {
            if !(*width > 0.0) {
                return bad(format!("phi0.width must be positive, got {width}"));
            }
            for (name, v) in [("center", center), ("momentum", momentum)] {
                if let Some(v) = v {
                    if v.len() != self.dim {
                        return bad(format!("phi0.{name} has {} components but dim = {}", v.len(), self.dim));
                    }
                }
            }
        }
        let tol = &self.tolerances;
        for (name, v) in [
            ("mass_drift", tol.mass_drift),
            ("energy_drift", tol.energy_drift),
            ("momentum_drift", tol.momentum_drift),
            ("identity", tol.identity),
            ("form_equivalence", tol.form_equivalence),
            ("trace_relation", tol.trace_relation),
            ("isomorphism", tol.isomorphism),
            ("bogoliubov", tol.bogoliubov),
            ("oracle", tol.oracle),
            ("slope", tol.slope),
        ] {
            if !(v > 0.0) {
                return bad(format!("tolerances.{name} must be positive, got {v}"));
            }
        }
        let grid = self.grid()?;
        let sweep: &[f64] = if self.experiment == Experiment::ErrorSweep { &self.sweep.n_list } else { &[] };
        for &n in std::iter::once(&self.n_particles).chain(sweep) {
            if n >= 1.0 {
                crate::hartree::scaled_potential(self.potential, &grid, n, self.beta)?;
            }
        }
        let f = &self.fock;
        if !(1..=6).contains(&f.modes) || f.n_max == 0 || f.bogoliubov_cap == 0 || f.oracle_cap < 8 {
            return bad(format!("fock settings out of range: {f:?}"));
        }
        match self.experiment {
            Experiment::ErrorSweep => {
                if self.sweep.n_list.len() < 3 {
                    return bad(format!("sweep.n_list needs at least 3 entries, got {}", self.sweep.n_list.len()));
                }
                if self.sweep.n_list.iter().any(|n| !(*n >= 1.0)) {
                    return bad("sweep.n_list entries must be >= 1".into());
                }
                if !matches!(self.phi0, InitialDatum::Gaussian { .. }) {
                    return bad("error-sweep needs a gaussian phi0".into());
                }
                if self.dim != 1 || self.n > crate::error_terms::MAX_N_QUARTIC {
                    return Err(Error::Resource(format!(
                        "error-sweep evaluates 4-argument kernels and needs dim = 1, n <= {}",
                        crate::error_terms::MAX_N_QUARTIC
                    )));
                }
            }
            Experiment::Pair => {
                let points = self.n.pow(self.dim as u32);
                if points > MAX_PAIR_POINTS {
                    return Err(Error::Resource(format!("pair kernels need at most {MAX_PAIR_POINTS} grid points, got {points}")));
                }
            }
            Experiment::FockVerify => {
                if f.oracle_n < f.modes.max(8) || !f.oracle_n.is_power_of_two() {
                    return bad(format!("fock.oracle_n must be a power of two >= max(8, modes), got {}", f.oracle_n));
                }
                let og = Grid::new(1, f.oracle_n, f.oracle_box_length).map_err(|e| Error::Config(format!("oracle grid: {e}")))?;
                crate::hartree::scaled_potential(self.potential, &og, self.n_particles, self.beta)?;
                let dim = binomial(f.modes + f.oracle_cap + 4, f.modes);
                if dim > MAX_DIMENSION {
                    return Err(Error::Resource(format!("oracle Fock space has dimension {dim} > {MAX_DIMENSION}")));
                }
            }
            Experiment::Hartree => {}
        }
        Ok(())
    }

    /// Build the initial condensate on `grid`; relative file paths resolve against `base`.
    pub fn initial_field(&self, grid: &Grid, base: &Path) -> Result<Field> {
        match &self.phi0 {
            InitialDatum::Gaussian { amplitude, center, momentum, width } => {
                let mut c = [0.5 * self.box_length; 3];
                let mut p = [0.0; 3];
                if let Some(v) = center {
                    c[..v.len()].copy_from_slice(v);
                }
                if let Some(v) = momentum {
                    p[..v.len()].copy_from_slice(v);
                }
                Ok(gaussian_packet(grid, *amplitude, c, p, *width))
            }
            InitialDatum::File { path } => {
                let path = base.join(path);
                let file = std::fs::File::open(&path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
                let f = Field::read_from(std::io::BufReader::new(file))?;
                if f.grid != *grid {
                    return Err(Error::Config(format!("{} lives on a different grid", path.display())));
                }
                Ok(f)
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Parse and validate a config from text.
pub fn parse_str(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(explain(e.message())))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Append a "did you mean" hint to serde's unknown-field messages.
fn explain(msg: &str) -> String {
    let Some(rest) = msg.strip_prefix("unknown field `") else {
        return msg.to_string();
    };
    let Some((field, tail)) = rest.split_once('`') else {
        return msg.to_string();
    };
    let candidates = tail.split('`').skip(1).step_by(2);
    let best = candidates
        .map(|c| (strsim::jaro_winkler(field, c), c))
        .filter(|(score, _)| *score > 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0));
    match best {
        Some((_, c)) => format!("{msg}; did you mean `{c}`?"),
        None => msg.to_string(),
    }
}
