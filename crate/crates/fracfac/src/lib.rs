//! Design-based causal inference with two-level factorial designs.
//!
//! This crate generates full `2^K`, fractional `2^(K-p)`, and incomplete
//! factorial designs, estimates factorial effects with Neymanian variances,
//! and provides the balance-diagnostic and randomization-inference machinery
//! needed to embed an observational study in a hypothetical fractional
//! factorial experiment.

pub mod algebra;
pub mod balance;
pub mod data;
pub mod design;
pub mod error;
pub mod estimate;
pub mod fisher;
pub mod regression;
pub mod report;
pub mod science;
pub mod word;

pub use error::{Error, Result};
pub use word::EffectWord;
