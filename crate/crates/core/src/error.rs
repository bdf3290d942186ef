use thiserror::Error;

/// Errors raised by path construction, estimation, simulation and ingestion.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("path too short: need at least 2 samples, got {0}")]
    PathTooShort(usize),
    #[error("invalid sample at index {index}: {value}")]
    InvalidSample { index: usize, value: f64 },
    #[error("invalid time span {0}: must be finite and positive")]
    InvalidTimeSpan(f64),
    #[error("insufficient data for block geometry: n={n}, k_n={k_n}")]
    InsufficientData { n: usize, k_n: usize },
    #[error("invalid stability index {0}")]
    InvalidStabilityIndex(f64),
    #[error("block out of range: j={j}, m_n={m_n}")]
    BlockOutOfRange { j: usize, m_n: usize },
    #[error("need at least two increments")]
    NeedTwoIncrements,
    #[error("chi undefined for beta={0}")]
    ChiUndefined(f64),
    #[error("invalid argument u={0}: must be finite and positive")]
    InvalidArgument(f64),
    #[error("degenerate denominator in ratio diagnostic")]
    DegenerateDenominator,
    #[error("too few observations: n={0}, need at least 8")]
    TooFewObservations(usize),
    #[error("degenerate path: zero bipower variation")]
    ZeroBipower,
    #[error("gamma undefined: u too small for grid (u={u}, delta={delta})")]
    GammaUndefined { u: f64, delta: f64 },
    #[error("degenerate variance estimate (i_hat={0})")]
    DegenerateVariance(f64),
    #[error("empty scan grid")]
    EmptyScanGrid,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("scenario produced no valid statistics ({0} failures)")]
    NoValidStatistics(usize),
    #[error("insufficient statistics for QQ: got {0}, need at least 10")]
    InsufficientQq(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no records")]
    NoRecords,
    #[error("grid point before first tick (t={0}s)")]
    GridBeforeFirstTick(f64),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the statistics themselves, as opposed to bad
    /// input files or arguments.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::DegenerateDenominator
                | Error::ZeroBipower
                | Error::GammaUndefined { .. }
                | Error::DegenerateVariance(_)
                | Error::NoValidStatistics(_)
                | Error::InsufficientQq(_)
                | Error::InsufficientData { .. }
                | Error::TooFewObservations(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
