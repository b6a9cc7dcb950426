use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("negative cost {value} returned for agent {agent}")]
    NegativeCost { agent: usize, value: f64 },

    #[error("objective unbounded below")]
    Unbounded,

    #[error("optimizer stagnated after {iterations} iterations (gradient norm {grad_norm:e})")]
    Stagnation {
        best: Vec<f64>,
        grad_norm: f64,
        iterations: usize,
    },

    #[error("no equilibrium effort found at (t={t}, z, x)")]
    NoEquilibrium { t: f64 },

    #[error("quadrature did not converge (relative change {change:e}); increase quadrature order")]
    Quadrature { change: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("non-finite value on simulated path {path}")]
    NonFinite { path: usize },

    #[error("volatility matrix is singular at t={t}")]
    SingularVolatility { t: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
