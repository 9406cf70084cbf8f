use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("kernel support {support} does not fit in half period {half_period}")]
    KernelWraps { support: f64, half_period: f64 },

    #[error("singularity exponent alpha = {alpha} outside [0, {max})")]
    AlphaOutOfRange { alpha: f64, max: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("theta constraint violated: 2 theta = {two_theta} >= J_eps * 1 = {conv_one}")]
    ThetaConstraint { two_theta: f64, conv_one: f64 },

    #[error("adhesion constraint violated: |a| sqrt(C_est) = {value} >= 1 (a = {a}, C_est = {c_est})")]
    AdhesionConstraint { a: f64, c_est: f64, value: f64 },

    #[error("memory guard: {0}")]
    MemoryGuard(String),

    #[error("time step {dt} exceeds stability bound {bound}")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("non-finite state at step {step} (t = {t}); state dumped to {}", dump.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<none>".into()))]
    NonFinite {
        step: u64,
        t: f64,
        dump: Option<PathBuf>,
    },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error("config: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
