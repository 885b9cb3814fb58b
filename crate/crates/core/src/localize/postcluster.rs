use super::config::LocalizeConfig;
use super::table::{Concept, ConceptTable, MergeEdge};
use crate::error::{Error, Result};
use crate::finch::{
    build_adjacency, connected_components, nearest_neighbors, pairwise_distance_vecs,
    DistanceMetric,
};
use crate::mask::Mask;
use crate::tensorio::AggregatedAttention;

/// Mean of the attention rows selected by `mask`.
pub fn mean_attention(mask: &Mask, a: &AggregatedAttention) -> Result<Vec<f64>> {
    if (mask.height(), mask.width()) != a.side() {
        return Err(Error::arg(format!(
            "mask is {}x{}, attention grid is {:?}",
            mask.height(),
            mask.width(),
            a.side()
        )));
    }
    if mask.is_empty() {
        return Err(Error::arg("mean attention of an empty mask"));
    }
    let mut f = vec![0.0; a.n()];
    for p in mask.indices() {
        for (acc, v) in f.iter_mut().zip(a.row(p)) {
            *acc += v;
        }
    }
    let k = mask.count() as f64;
    f.iter_mut().for_each(|v| *v /= k);
    Ok(f)
}

fn renormalize(mut f: Vec<f64>) -> Vec<f64> {
    let s: f64 = f.iter().sum();
    if s > 0.0 {
        f.iter_mut().for_each(|v| *v /= s);
    }
    f
}

/// Constrained first-neighbor merging of surviving masks.
///
/// An edge between two current clusters is vetoed when their centroid
/// distance exceeds `delta` or their masks do not touch. Merging repeats
/// until no edge survives or `max_post_iters` rounds have run.
pub fn post_cluster(
    survivors: &[Mask],
    a: &AggregatedAttention,
    delta: f64,
    cfg: &LocalizeConfig,
) -> Result<ConceptTable> {
    cfg.validate()?;
    if !(delta >= 0.0) {
        return Err(Error::arg(format!(
            "delta must be nonnegative, got {delta}"
        )));
    }
    for (i, m) in survivors.iter().enumerate() {
        for other in &survivors[i + 1..] {
            if m.overlaps(other)? {
                return Err(Error::arg("surviving masks overlap"));
            }
        }
    }
    let metric = DistanceMetric::kl();
    let mut masks: Vec<Mask> = survivors.to_vec();
    let mut centroids = masks
        .iter()
        .map(|m| mean_attention(m, a))
        .collect::<Result<Vec<_>>>()?;
    let mut merges = Vec::new();

    for iteration in 0..cfg.max_post_iters {
        let n = masks.len();
        if n < 2 {
            break;
        }
        let points: Vec<Vec<f64>> = centroids.iter().cloned().map(renormalize).collect();
        let d = pairwise_distance_vecs(&points, metric)?;
        let mut touching = vec![false; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let t = masks[i].touches(&masks[j], cfg.adjacency_connectivity)?;
                touching[i * n + j] = t;
                touching[j * n + i] = t;
            }
        }
        let kappa = nearest_neighbors(d.view())?;
        let graph = build_adjacency(
            &kappa,
            Some(|i: usize, j: usize| d[[i, j]] > delta || !touching[i * n + j]),
        )?;
        let edges = graph.edges();
        if edges.is_empty() {
            break;
        }
        merges.extend(edges.iter().map(|&(i, j)| MergeEdge {
            iteration,
            a: i,
            b: j,
            distance: d[[i, j]],
        }));
        let labels = connected_components(&graph);
        let count = labels.iter().max().map_or(0, |m| m + 1);
        let (h, w) = a.side();
        let mut merged = vec![Mask::empty(h, w); count];
        for (k, &l) in labels.iter().enumerate() {
            merged[l] = merged[l].union(&masks[k])?;
        }
        centroids = merged
            .iter()
            .map(|m| mean_attention(m, a))
            .collect::<Result<Vec<_>>>()?;
        masks = merged;
    }

    let concepts = masks
        .into_iter()
        .zip(centroids)
        .enumerate()
        .map(|(token_id, (mask, f))| Concept {
            token_id,
            embedding: None,
            mask,
            f,
        })
        .collect();
    Ok(ConceptTable {
        side: a.side(),
        concepts,
        merges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::Connectivity;
    use ndarray::Array2;

    fn uniform(h: usize, w: usize) -> AggregatedAttention {
        AggregatedAttention::from_unnormalized(h, w, Array2::ones((h * w, h * w))).unwrap()
    }

    fn random_attention(h: usize, w: usize, seed: u64) -> AggregatedAttention {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows = Array2::from_shape_fn((h * w, h * w), |_| rng.random_range(0.01..1.0));
        AggregatedAttention::from_unnormalized(h, w, rows).unwrap()
    }

    #[test]
    fn mean_attention_matches_rows() {
        let a = random_attention(3, 3, 1);
        let single = mean_attention(&Mask::from_indices(3, 3, [4]), &a).unwrap();
        assert_eq!(single, a.row(4));
        let pair = mean_attention(&Mask::from_indices(3, 3, [2, 7]), &a).unwrap();
        for (q, v) in pair.iter().enumerate() {
            assert!((v - (a.row(2)[q] + a.row(7)[q]) / 2.0).abs() < 1e-15);
        }
        let all = mean_attention(&Mask::full(3, 3), &a).unwrap();
        assert!((all.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(mean_attention(&Mask::empty(3, 3), &a).is_err());
    }

    #[test]
    fn adjacent_similar_masks_merge() {
        let a = uniform(2, 4);
        let left = Mask::from_indices(2, 4, [0, 4]);
        let right = Mask::from_indices(2, 4, [1, 5]);
        let t = post_cluster(&[left, right], &a, 0.0, &LocalizeConfig::default()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.concepts[0].mask.count(), 4);
        assert_eq!(t.merges.len(), 1);
    }

    #[test]
    fn non_touching_masks_never_merge() {
        let a = uniform(1, 5);
        let m0 = Mask::from_indices(1, 5, [0]);
        let m1 = Mask::from_indices(1, 5, [4]);
        let t = post_cluster(&[m0, m1], &a, 10.0, &LocalizeConfig::default()).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.merges.is_empty());
    }

    #[test]
    fn distance_veto_blocks_merge() {
        let a = random_attention(1, 2, 3);
        let t = post_cluster(
            &[Mask::from_indices(1, 2, [0]), Mask::from_indices(1, 2, [1])],
            &a,
            0.0,
            &LocalizeConfig::default(),
        )
        .unwrap();
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn chain_merges_through_middle() {
        let a = uniform(1, 3);
        let masks: Vec<Mask> = (0..3).map(|i| Mask::from_indices(1, 3, [i])).collect();
        let cfg = LocalizeConfig {
            adjacency_connectivity: Connectivity::Four,
            ..Default::default()
        };
        let t = post_cluster(&masks, &a, 0.0, &cfg).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.concepts[0].mask, Mask::full(1, 3));
        assert!(t.merges.iter().all(|e| e.a.abs_diff(e.b) == 1));
    }

    #[test]
    fn empty_survivors_give_empty_table() {
        let t = post_cluster(&[], &uniform(2, 2), 0.0, &LocalizeConfig::default()).unwrap();
        assert!(t.is_empty());
    }
}
