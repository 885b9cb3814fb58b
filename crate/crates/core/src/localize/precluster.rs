use ndarray::ArrayView2;

use super::config::LocalizeConfig;
use crate::error::Result;
use crate::finch::{finch_with_distances, DistanceMetric};
use crate::mask::Mask;
use crate::tensorio::AggregatedAttention;

/// Masks of the selected hierarchy level and the intra-cluster spread `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreClusterResult {
    pub masks: Vec<Mask>,
    /// Largest distance between two samples of the same cluster.
    pub delta: f64,
    pub level_index: usize,
    /// Cluster counts of every hierarchy level, finest first.
    pub level_counts: Vec<usize>,
}

/// Level with the smallest count above `n_max`; the finest level when none exceeds it.
pub fn select_level(counts: &[usize], n_max: usize) -> usize {
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > n_max)
        .min_by_key(|(k, &c)| (c, *k))
        .map_or(0, |(k, _)| k)
}

/// Maximum pairwise distance within any group.
pub fn max_intra_distance(d: ArrayView2<'_, f64>, groups: &[Vec<usize>]) -> f64 {
    let mut delta = 0.0f64;
    for g in groups {
        for (a, &i) in g.iter().enumerate() {
            for &j in &g[a + 1..] {
                delta = delta.max(d[[i, j]]);
            }
        }
    }
    delta
}

/// First-neighbor clustering of the attention rows, cut just above `n_max` clusters.
pub fn pre_cluster(a: &AggregatedAttention, cfg: &LocalizeConfig) -> Result<PreClusterResult> {
    cfg.validate()?;
    let (hierarchy, base) = finch_with_distances(a.rows(), DistanceMetric::kl(), None, None)?;
    let level_counts = hierarchy.counts();
    let level_index = select_level(&level_counts, cfg.n_max);
    let groups = hierarchy.level(level_index).members();
    let delta = max_intra_distance(base.view(), &groups);
    let (h, w) = a.side();
    let masks = groups
        .iter()
        .map(|g| Mask::from_indices(h, w, g.iter().copied()))
        .collect();
    Ok(PreClusterResult {
        masks,
        delta,
        level_index,
        level_counts,
    })
}
