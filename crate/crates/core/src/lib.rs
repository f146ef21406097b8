//! One-class anomaly detection on frozen pre-trained embeddings: residual
//! adapter training, kNN and k-means scoring, representation diagnostics.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod error;
pub mod geometry;
pub mod losses;
pub mod adapter;
pub mod scoring;
pub mod diagnostics;
pub mod trainer;
pub mod synthetic;
pub mod cli;
