use ndarray::{Array2, ArrayView2};

use super::distance::{pairwise_distance, DistanceMetric};
use super::graph::{build_adjacency, connected_components, nearest_neighbors, NeighborGraph};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Veto over two groups of original sample indices; `true` forbids the edge.
pub type GroupVeto<'a> = &'a (dyn Fn(&[usize], &[usize]) -> bool + 'a);

/// One level of the hierarchy.
#[derive(Debug, Clone)]
pub struct Partition<T> {
    /// Cluster of every original sample.
    pub labels: Vec<usize>,
    pub count: usize,
    /// Mean of the original member samples, one row per cluster.
    pub centroids: Array2<T>,
    /// First-neighbor graph over the previous level's clusters (samples for level 0).
    pub graph: NeighborGraph,
}

impl<T> Partition<T> {
    /// Original sample indices of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

/// Partitions from finest (level 0) to coarsest.
#[derive(Debug, Clone)]
pub struct ClusterHierarchy<T> {
    levels: Vec<Partition<T>>,
}

impl<T> ClusterHierarchy<T> {
    pub fn levels(&self) -> &[Partition<T>] {
        &self.levels
    }

    pub fn counts(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.count).collect()
    }

    pub fn level(&self, k: usize) -> &Partition<T> {
        &self.levels[k]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

fn centroids<T: Scalar>(samples: ArrayView2<'_, T>, labels: &[usize], count: usize) -> Array2<T> {
    let dim = samples.ncols();
    let mut sums = Array2::<f64>::zeros((count, dim));
    let mut sizes = vec![0usize; count];
    for (row, &l) in samples.outer_iter().zip(labels) {
        sizes[l] += 1;
        let mut acc = sums.row_mut(l);
        for (a, &v) in acc.iter_mut().zip(row.iter()) {
            *a += v.as_f64();
        }
    }
    Array2::from_shape_fn((count, dim), |(c, k)| {
        if sizes[c] == 1 {
            // Singleton centroids reproduce the sample exactly.
            T::from_f64_lossy(sums[[c, k]])
        } else {
            T::from_f64_lossy(sums[[c, k]] / sizes[c] as f64)
        }
    })
}

fn renormalized<T: Scalar>(x: &Array2<T>) -> Array2<T> {
    let mut x = x.clone();
    for mut row in x.outer_iter_mut() {
        let s: f64 = row.iter().map(|v| v.as_f64()).sum();
        if s > 0.0 {
            row.mapv_inplace(|v| T::from_f64_lossy(v.as_f64() / s));
        }
    }
    x
}

/// Clusters one set of points (`points` are samples or centroids) and returns
/// the graph and per-point labels.
fn cluster_once(
    d: &Array2<f64>,
    groups: &[Vec<usize>],
    veto: Option<GroupVeto<'_>>,
) -> Result<(NeighborGraph, Vec<usize>)> {
    let kappa = nearest_neighbors(d.view())?;
    let graph = match veto {
        Some(v) => build_adjacency(&kappa, Some(|i: usize, j: usize| v(&groups[i], &groups[j])))?,
        None => build_adjacency(&kappa, None::<fn(usize, usize) -> bool>)?,
    };
    let labels = connected_components(&graph);
    Ok((graph, labels))
}

/// FINCH clustering that also returns the level-0 sample distance matrix.
pub fn finch_with_distances<T: Scalar>(
    samples: ArrayView2<'_, T>,
    metric: DistanceMetric,
    veto: Option<GroupVeto<'_>>,
    min_clusters: Option<usize>,
) -> Result<(ClusterHierarchy<T>, Array2<f64>)> {
    let n = samples.nrows();
    if n < 2 {
        return Err(Error::arg(format!(
            "finch needs at least 2 samples, got {n}"
        )));
    }
    let base = pairwise_distance(samples, metric)?;
    let singletons: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let (graph, labels) = cluster_once(&base, &singletons, veto)?;
    let count = labels.iter().max().map_or(0, |m| m + 1);
    let mut levels = vec![Partition {
        centroids: centroids(samples, &labels, count),
        labels,
        count,
        graph,
    }];

    loop {
        let prev = levels.last().expect("level 0 exists");
        if prev.count < 2 {
            break;
        }
        let groups = prev.members();
        let points = match metric {
            DistanceMetric::SymmetricMeanKl { .. } => renormalized(&prev.centroids),
            DistanceMetric::Euclidean => prev.centroids.clone(),
        };
        let d = pairwise_distance(points.view(), metric)?;
        let (graph, merged) = cluster_once(&d, &groups, veto)?;
        let count = merged.iter().max().map_or(0, |m| m + 1);
        if count == prev.count || min_clusters.is_some_and(|m| count < m) {
            break;
        }
        let labels: Vec<usize> = prev.labels.iter().map(|&l| merged[l]).collect();
        levels.push(Partition {
            centroids: centroids(samples, &labels, count),
            labels,
            count,
            graph,
        });
    }
    Ok((ClusterHierarchy { levels }, base))
}

/// First-neighbor hierarchical clustering of the rows of `samples`.
///
/// `veto(a, b)` receives the original sample indices of two candidate groups
/// and returns `true` to forbid linking them. Recursion stops at one cluster,
/// when a round merges nothing, or when it would go below `min_clusters`.
pub fn finch<T: Scalar>(
    samples: ArrayView2<'_, T>,
    metric: DistanceMetric,
    veto: Option<GroupVeto<'_>>,
    min_clusters: Option<usize>,
) -> Result<ClusterHierarchy<T>> {
    finch_with_distances(samples, metric, veto, min_clusters).map(|(h, _)| h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn blobs(k: usize, per: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for b in 0..k {
            let (cx, cy) = ((b % 2) as f64 * 100.0, (b / 2) as f64 * 100.0);
            for _ in 0..per {
                rows.push(cx + rng.random_range(-1.0..1.0));
                rows.push(cy + rng.random_range(-1.0..1.0));
                truth.push(b);
            }
        }
        (Array2::from_shape_vec((k * per, 2), rows).unwrap(), truth)
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn four_blobs_recovered_at_some_level() {
        let (x, truth) = blobs(4, 10, 1);
        let h = finch(x.view(), DistanceMetric::Euclidean, None, None).unwrap();
        let lvl = h
            .levels()
            .iter()
            .find(|l| l.count == 4)
            .expect("a 4-cluster level");
        assert!(same_partition(&lvl.labels, &truth));
    }

    #[test]
    fn identical_samples_collapse_immediately() {
        let x = Array2::from_elem((6, 3), 1.0 / 3.0);
        let h = finch(x.view(), DistanceMetric::kl(), None, None).unwrap();
        assert_eq!(h.level(0).count, 1);
        assert_eq!(h.len(), 1);
    }

    #[test]
    fn veto_pins_blob_partition() {
        let (x, truth) = blobs(4, 6, 9);
        let t = truth.clone();
        let veto = move |a: &[usize], b: &[usize]| t[a[0]] != t[b[0]];
        let h = finch(x.view(), DistanceMetric::Euclidean, Some(&veto), None).unwrap();
        let last = h.levels().last().unwrap();
        assert_eq!(last.count, 4);
        assert!(same_partition(&last.labels, &truth));
    }

    #[test]
    fn counts_decrease_and_labels_coarsen() {
        let (x, _) = blobs(4, 12, 2);
        let h = finch(x.view(), DistanceMetric::Euclidean, None, None).unwrap();
        for w in h.levels().windows(2) {
            assert!(w[1].count < w[0].count);
            for i in 0..x.nrows() {
                for j in 0..x.nrows() {
                    if w[0].labels[i] == w[0].labels[j] {
                        assert_eq!(w[1].labels[i], w[1].labels[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn min_clusters_stops_recursion() {
        let (x, _) = blobs(4, 10, 5);
        let h = finch(x.view(), DistanceMetric::Euclidean, None, Some(4)).unwrap();
        assert!(h.counts().iter().all(|&c| c >= 4));
    }

    #[test]
    fn centroid_is_member_mean() {
        let (x, _) = blobs(2, 5, 1);
        let h = finch(x.view(), DistanceMetric::Euclidean, None, None).unwrap();
        let lvl = h.level(0);
        for (c, members) in lvl.members().iter().enumerate() {
            for k in 0..2 {
                let mean = members.iter().map(|&i| x[[i, k]]).sum::<f64>() / members.len() as f64;
                assert!((lvl.centroids[[c, k]] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn too_few_samples() {
        let x = Array2::<f32>::zeros((1, 2));
        assert!(finch(x.view(), DistanceMetric::Euclidean, None, None).is_err());
    }
}
