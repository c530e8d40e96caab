use thiserror::Error;

/// Failure modes of the spectral computations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("tail decays like r^-{exponent}, too slowly for a three-dimensional transform")]
    NonIntegrableTail { exponent: f64 },
    #[error("profile diverges faster than r^-2 at the origin (r^2 V grows from {from:e} to {to:e})")]
    NonIntegrableCore { from: f64, to: f64 },
    #[error("spectrum cutoff truncation error {estimate:e} exceeds tolerance {tolerance:e}")]
    InsufficientSpectrum { estimate: f64, tolerance: f64 },
    #[error("r^4 V(r) grows without bound along the extrapolation ladder (log2 slope {slope})")]
    DivergentTail { slope: f64 },
    #[error("ill-conditioned fit: {0}")]
    IllConditionedFit(String),
    #[error("quadrature error estimate {estimate:e} above tolerance {tolerance:e} at p = {p}")]
    QuadratureFailure { p: f64, estimate: f64, tolerance: f64 },
    #[error("scaled box half-width {half_width} does not contain the effective support radius {support}")]
    BoxTooSmall { half_width: f64, support: f64 },
    #[error("no coefficient stored for lattice index ({0}, {1}, {2})")]
    MissingCoefficient(i64, i64, i64),
    #[error("degenerate denominator in the pair-field coefficient")]
    DegenerateDenominator,
    #[error("candidate set for the critical velocity is empty")]
    EmptyLattice,
    #[error("momentum {p} outside the sampled spectrum range [0, {p_max}]")]
    SpectrumRangeExceeded { p: f64, p_max: f64 },
    #[error("sound-slope prediction needs tail exponent 4, got {0}")]
    WrongTailExponent(f64),
    #[error("fit failure: {0}")]
    FitFailure(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
