use thiserror::Error;

/// Errors raised by the library.
///
/// Variants split into input validation problems and numerical precondition
/// failures; [`Error::is_numerical`] tells them apart.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid series spec: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("series overflows f64 range; maximal safe length is {max_n}")]
    Range { max_n: usize },
    #[error("window length {l} out of range for series of length {n}")]
    WindowOutOfRange { l: usize, n: usize },
    #[error("matrix is not Hankel (anti-diagonal spread {spread:e})")]
    NotHankel { spread: f64 },
    #[error("degenerate rank: expected {expected} eigenvalues above threshold, found {found}")]
    DegenerateRank { expected: usize, found: usize },
    #[error("ambiguous subspace: relative singular value gap {gap:e} at rank {d}")]
    AmbiguousSubspace { d: usize, gap: f64 },
    #[error("radius violated: ||B||/mu_min = {beta} is not below {limit}")]
    Radius { beta: f64, limit: f64 },
    #[error("resolvent I - delta^2 A0/mu is singular")]
    SingularResolvent,
    #[error("P0 e_L vanishes (norm {0:e})")]
    VanishingNullComponent(f64),
    #[error("singular matrix U^T F1 U")]
    SingularBasis,
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical precondition (radius, gap, singular solves).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Range { .. }
                | Error::DegenerateRank { .. }
                | Error::AmbiguousSubspace { .. }
                | Error::Radius { .. }
                | Error::SingularResolvent
                | Error::VanishingNullComponent(_)
                | Error::SingularBasis
                | Error::Precondition(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
