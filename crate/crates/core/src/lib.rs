//! Estimation of the average adjusted association: the covariate-averaged
//! log odds ratio between a binary exposure and a binary outcome.

pub mod cli;
pub mod crossfit;
pub mod domain;
pub mod error;
pub mod featurize;
pub mod nuisance;
pub mod oracle;
pub mod simulate;

pub use error::{Error, Result};
