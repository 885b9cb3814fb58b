use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct KMeansResult<T> {
    pub labels: Vec<usize>,
    pub centroids: Array2<T>,
    /// Inertia after each assignment step.
    pub inertia: Vec<f64>,
}

fn sq_dist<T: Scalar>(a: ndarray::ArrayView1<'_, T>, b: ndarray::ArrayView1<'_, T>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum()
}

/// Lloyd's algorithm with seeded initialization from `k` distinct samples.
///
/// Assignment ties go to the lower centroid index; a cluster that loses all
/// members keeps its previous centroid. Stops early once assignments settle.
pub fn kmeans<T: Scalar>(
    samples: ArrayView2<'_, T>,
    k: usize,
    seed: u64,
    iters: usize,
) -> Result<KMeansResult<T>> {
    let (n, dim) = samples.dim();
    if k == 0 {
        return Err(Error::arg("k must be at least 1"));
    }
    if k > n {
        return Err(Error::arg(format!("k = {k} exceeds the {n} samples")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = rand::seq::index::sample(&mut rng, n, k).into_vec();
    init.sort_unstable();
    let mut centroids = Array2::from_shape_fn((k, dim), |(c, j)| samples[[init[c], j]]);
    let mut labels = vec![usize::MAX; n];
    let mut inertia = Vec::new();

    for _ in 0..iters.max(1) {
        let mut changed = false;
        let mut total = 0.0;
        for (i, row) in samples.outer_iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, cen) in centroids.outer_iter().enumerate() {
                let d = sq_dist(row, cen);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            total += best_d;
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        inertia.push(total);
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut sizes = vec![0usize; k];
        for (row, &l) in samples.outer_iter().zip(&labels) {
            sizes[l] += 1;
            for (a, &v) in sums.row_mut(l).iter_mut().zip(row.iter()) {
                *a += v.as_f64();
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                for j in 0..dim {
                    centroids[[c, j]] = T::from_f64_lossy(sums[[c, j]] / sizes[c] as f64);
                }
            }
        }
    }
    Ok(KMeansResult {
        labels,
        centroids,
        inertia,
    })
}
