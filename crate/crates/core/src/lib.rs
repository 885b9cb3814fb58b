//! Unsupervised concept localization from self-attention.
//!
//! The pipeline: aggregate multi-layer self-attention ([`tensorio`]), cluster
//! it with first-neighbor hierarchical clustering ([`finch`]), filter and merge
//! regions into concepts ([`localize`]), then learn one embedding per concept
//! against a synthetic denoiser ([`sandbox`]) with an optimal-transport
//! attention regularizer ([`transport`]). [`evalbench`] scores masks against
//! ground truth and generates synthetic scenes.

// `!(x > 0.0)` checks are written to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evalbench;
pub mod finch;
pub mod localize;
pub mod mask;
pub mod sandbox;
pub mod scalar;
pub mod tensorio;
pub mod transport;

pub use error::{Error, Result};
pub use mask::{Connectivity, Mask};
pub use scalar::{AssignCost, Scalar};

/// Cluster hierarchy over f64 samples.
pub type Hierarchy = finch::ClusterHierarchy<f64>;
/// Cluster hierarchy over f32 samples.
pub type Hierarchy32 = finch::ClusterHierarchy<f32>;
