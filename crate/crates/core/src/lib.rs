//! Robust training of small classifiers on datasets with open-set and
//! closed-set label noise.
//!
//! Three coupled mechanisms run in a closed loop:
//! - per-class probabilistic-cumulative LOF detection of noisy labels on
//!   learned features ([`detection`]),
//! - contrastive feature learning over mined clean/noisy pairs
//!   ([`losses`], [`pairing`]),
//! - confidence-reweighted softmax training ([`losses`], [`trainer`]).
//!
//! [`dataset`] generates and corrupts synthetic benchmarks, [`model`] is a
//! small MLP with explicit forward/backward passes, and [`evaluation`]
//! scores classification and detection quality.

pub mod dataset;
pub mod detection;
pub mod evaluation;
pub mod losses;
pub mod model;
pub mod neighbors;
pub mod pairing;
pub mod trainer;

mod error;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
