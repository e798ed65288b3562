//! Bayesian hierarchical models for grouped outcome data.

pub mod data;
pub mod dist;
pub mod error;
pub mod estimators;
pub mod ladder;
pub mod mcmc;
pub mod models;
pub mod random;
pub mod report;
pub mod synthetic;
pub mod waic;

pub use error::{Error, Result};
pub use random::RandomStream;
