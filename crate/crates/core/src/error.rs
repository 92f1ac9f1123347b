use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix pair is not regular")]
    NotRegular,

    #[error("regularity tests disagree: Wong direct sum says {wong}, determinant probe says {probe}")]
    RegularityMismatch { wong: bool, probe: bool },

    #[error("matrix exponential overflow (norm of argument {0:.3e})")]
    ExpOverflow(f64),

    #[error("time {t} outside domain [{start}, {end})")]
    OutOfDomain { t: f64, start: f64, end: f64 },

    #[error("invalid interval [{0}, {1})")]
    InvalidInterval(f64, f64),

    #[error("invalid switching signal: {0}")]
    Switching(String),

    #[error("impulsive input at t = {0} is not supported")]
    ImpulsiveInput(f64),

    #[error("DAE residual {residual:.3e} exceeds {limit:.1e} at t = {t}")]
    Residual { t: f64, residual: f64, limit: f64 },

    #[error("step size must be positive, got {0}")]
    Step(f64),

    #[error("gain design failed: {0}")]
    GainDesign(String),

    #[error("sample grid too coarse: {0} samples (need at least {1})")]
    CoarseGrid(usize, usize),

    #[error("window [{p}, {q}) is not certified detectable (alpha = {alpha:.6})")]
    NotDetectable { p: usize, q: usize, alpha: f64 },

    #[error("error budget violated on window [{p}, {q}): {detail}")]
    Budget { p: usize, q: usize, detail: String },

    #[error("configuration: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
