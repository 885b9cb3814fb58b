//! Concept localization: pre-clustering of attention rows, saliency
//! filtering, and adjacency-constrained post-clustering.

mod config;
mod postcluster;
mod precluster;
mod saliency;
mod table;

pub use config::LocalizeConfig;
pub use postcluster::{mean_attention, post_cluster};
pub use precluster::{max_intra_distance, pre_cluster, select_level, PreClusterResult};
pub use saliency::{filter_indices, filter_masks, SaliencyMap};
pub use table::{Concept, ConceptTable, MergeEdge};

use crate::error::{Error, Result};
use crate::tensorio::AggregatedAttention;

/// Full pipeline; the concept count is determined by the data.
///
/// Fails with [`Error::EmptyResult`] when the saliency map carries no mass
/// or when every pre-cluster mask is filtered out.
pub fn localize(
    a: &AggregatedAttention,
    e: &SaliencyMap,
    cfg: &LocalizeConfig,
) -> Result<ConceptTable> {
    if a.side() != e.side() {
        return Err(Error::arg(format!(
            "attention grid {:?} vs saliency {:?}",
            a.side(),
            e.side()
        )));
    }
    cfg.validate()?;
    if e.total() == 0.0 {
        return Err(Error::EmptyResult("saliency map is zero everywhere".into()));
    }
    let pre = pre_cluster(a, cfg)?;
    let survivors = filter_masks(&pre.masks, e)?;
    if survivors.is_empty() {
        return Err(Error::EmptyResult(format!(
            "all {} pre-cluster masks fall below the mean saliency {:.6e}",
            pre.masks.len(),
            e.mean()
        )));
    }
    post_cluster(&survivors, a, pre.delta, cfg)
}
