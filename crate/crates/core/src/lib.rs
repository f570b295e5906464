//! Post-hoc out-of-distribution detection for segmentation networks.
//!
//! Bottleneck embeddings are reduced (average pooling, PCA or t-SNE), a
//! Gaussian is fit to the training features, and test samples are scored by
//! their Mahalanobis distance. Detection quality is reported as AUROC, AUPR
//! and FPR at 75% TPR with OOD as the positive class.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod reduction;
pub mod synthetic;
pub mod tensor_io;

pub use error::{OodError, Result};
