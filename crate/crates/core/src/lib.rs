//! Hyperparameter tuning by blocked cross-validation.

pub mod anova;
pub mod data;
pub mod design;
pub mod error;
pub mod learner;
pub mod params;
pub mod partition;
pub mod permtest;
pub mod report;
pub mod rng;
pub mod simcheck;
pub mod stats;

pub use error::{Error, Result};
