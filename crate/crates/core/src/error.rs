use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("{what} ({dim}x{dim}) is not positive definite")]
    NotPositiveDefinite { what: &'static str, dim: usize },

    #[error("symmetric eigendecomposition did not converge for a {0}x{0} matrix")]
    EigenNonConvergence(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{0}")]
    Unsupported(&'static str),

    #[error("conjugate minimizer not bracketed in [{lo:e}, {hi:e}] (coordinate {index})")]
    NotBracketed { index: usize, lo: f64, hi: f64 },

    #[error("noise precision update has non-positive denominator {0:e}")]
    NoiseDenominator(f64),

    #[error("iteration {iter}: {source}")]
    AtIteration {
        iter: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid experiment spec: {0}")]
    Spec(String),

    #[error("estimator {name}: {excluded} of {total} trials failed (limit 5%)")]
    ExcessiveExclusions {
        name: String,
        excluded: usize,
        total: usize,
    },

    #[error("trial data fingerprint mismatch for estimator {0}")]
    Fingerprint(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// True for failures that stem from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotPositiveDefinite { .. }
            | Error::EigenNonConvergence(_)
            | Error::NotBracketed { .. }
            | Error::NoiseDenominator(_)
            | Error::NonFinite(_)
            | Error::ExcessiveExclusions { .. } => true,
            Error::AtIteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
