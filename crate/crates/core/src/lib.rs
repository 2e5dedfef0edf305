//! Pipeline for soft-clustering student behavior from educational event logs.
//!
//! The crate turns raw page-access / quiz logs into weekly per-student
//! behavior features and factors the resulting matrix with weighted
//! non-negative matrix factorization:
//!
//! 1. [`events`] — parse and validate raw log records.
//! 2. [`session`] — merge records into sessions and weekly activity periods.
//! 3. [`features`] — compute the 14 behavior features and assemble the
//!    masked feature matrix.
//! 4. [`wnmf`] — masked multiplicative-update factorization, cluster
//!    normalization, and rank selection.
//! 5. [`analysis`] — cluster matrices, membership distributions, and
//!    per-period membership time series.
//! 6. [`synth`] — synthetic cohorts with planted factors for verification.

pub mod analysis;
pub mod error;
pub mod events;
pub mod features;
pub mod seeding;
pub mod session;
pub mod synth;
pub mod wnmf;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
