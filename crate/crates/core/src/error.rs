use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("layout error: {0}")]
    Layout(String),
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("degenerate spectrum: |s_i^2 - s_j^2| = {gap:e} for active pair ({i}, {j})")]
    DegenerateSpectrum { i: usize, j: usize, gap: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("no convergence after {iters} iterations (last two iterates {prev:e}, {last:e})")]
    NonConvergence { iters: usize, prev: f64, last: f64 },
    #[error("budget exceeded: {count} candidates > budget {budget}")]
    Budget { count: u128, budget: u128 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
