use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("matrix is not Hermitian (max |H - H^†| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid experiment: {0}")]
    InvalidSpec(String),

    #[error(
        "quadrature did not converge: estimated error {estimate:e} > tolerance {tolerance:e} \
         after {evaluations} integrand evaluations ({context})"
    )]
    Quadrature {
        estimate: f64,
        tolerance: f64,
        evaluations: usize,
        context: String,
    },

    #[error("invalid trace: {0}")]
    Trace(String),

    #[error("under-determined system: rank {rank} < 3; add one of {missing:?}")]
    UnderDetermined { rank: usize, missing: Vec<String> },
}

impl Error {
    /// Stable snake_case identifier for machine-readable reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Usage(_) => "usage",
            Error::Degenerate(_) => "degenerate",
            Error::Contract(_) => "contract",
            Error::NotHermitian { .. } => "not_hermitian",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::Quadrature { .. } => "quadrature",
            Error::Trace(_) => "trace",
            Error::UnderDetermined { .. } => "under_determined",
        }
    }
}
