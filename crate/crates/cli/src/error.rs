use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config or potential spec; exit code 2.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// A computation could not be carried out; exit code 1.
    #[error("computation failed: {0}")]
    Compute(pairspec::Error),
    /// The run completed but a check did not pass; exit code 1.
    #[error("verification failed: {0}")]
    Failed(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            _ => 1,
        }
    }
}

impl From<pairspec::Error> for CliError {
    fn from(e: pairspec::Error) -> Self {
        use pairspec::Error as E;
        match e {
            E::InvalidInput(msg) => CliError::Invalid(msg),
            E::NonIntegrableTail { .. }
            | E::NonIntegrableCore { .. }
            | E::DivergentTail { .. }
            | E::BoxTooSmall { .. }
            | E::WrongTailExponent(_)
            | E::SpectrumRangeExceeded { .. }
            | E::EmptyLattice => CliError::Invalid(e.to_string()),
            other => CliError::Compute(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
