//! Frame-level error detection over long embedding sequences with a
//! hierarchical selective state-space model.
//!
//! Modules, bottom-up:
//! - [`tensor`]: dense tensors and reverse-mode autodiff
//! - [`ssm`]: discretization, LTI recurrence/kernel, selective scan
//! - [`model`]: fine-to-coarse temporal fusion, BMSS blocks, the full detector
//! - [`data`]: embedding/annotation formats, label derivation, synthetic data
//! - [`train`]: BCE objective, AdamW, training loop, checkpoints
//! - [`metrics`]: ROC-AUC, AP, instance grouping, duration strata
//! - [`complexity`]: parameter and FLOP accounting

// `!(x > 0.0)` is used on purpose so NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Numeric kernels index several parallel buffers with one loop variable.
#![allow(clippy::needless_range_loop)]

pub mod complexity;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod ssm;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Graph, Padding, Tensor, Var};
