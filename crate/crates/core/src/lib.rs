//! Evaluation harness for regression test selection tools on
//! simulation-based self-driving car test suites.

pub mod dataset;
pub mod geometry;
pub mod model;
pub mod validate;
pub mod baselines;
pub mod protocol;
pub mod evaluator;
pub mod fixtures;
pub mod metrics;
pub mod report;
