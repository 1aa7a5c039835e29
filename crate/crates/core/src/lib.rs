//! Bayesian low-rank matrix reconstruction and completion.
//!
//! The [`estimator`] module implements the relevance singular vector machine
//! (RSVM): a type-II Bayesian estimator that places a Kronecker-structured
//! Gaussian prior on the unknown matrix and learns the left/right precision
//! matrices and the noise precision from the data. [`baselines`] holds the
//! classic vector RVM and a nuclear-norm estimator, and [`harness`] runs
//! seeded Monte-Carlo NMSE experiments over all of them.

pub mod baselines;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod penalties;

pub use error::{Error, Result};
pub use estimator::{fit, EstimatorConfig, FitResult, NoiseRule, PosteriorState, Sidedness};
pub use linalg::{Mat, SymPd, Vector};
pub use penalties::PenaltyKind;
