//! Explainable sepsis-risk modelling on tabular clinical records.
//!
//! The crate covers the whole path from raw delimited files to explained
//! predictions: sparsity profiling and column dropping ([`dataset`]),
//! chained-equation imputation ([`impute`]), descriptive statistics and
//! significance tests ([`stats`]), a logistic GLM and second-order boosted
//! trees ([`models`]), LIME explanations ([`explain`]) and the confusion
//! matrix statistics block ([`metrics`]). [`pipeline`] wires the stages
//! together behind a single configuration.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod dataset;
pub mod error;
pub mod explain;
pub mod impute;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod par;
pub mod pipeline;
pub mod special;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
