use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid potential: {0}")]
    Potential(String),
    #[error("under-resolved discretization: {0}")]
    UnderResolved(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("series did not converge after {terms} terms (last term norm {last:.3e})")]
    NoConvergence { terms: usize, last: f64 },
    #[error("ill-conditioned operator (condition estimate {0:.3e})")]
    IllConditioned(f64),
    #[error("symmetry violation: {what} residual {residual:.3e}")]
    Symmetry { what: &'static str, residual: f64 },
    #[error("resource guard: {0}")]
    Resource(String),
    #[error("fit precondition: {0}")]
    Fit(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Grid(_) | Error::Potential(_) | Error::UnderResolved(_) => 2,
            Error::Resource(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

/// Attach the name of the failing pipeline stage to an error.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage, source: Box::new(e) },
        })
    }
}
