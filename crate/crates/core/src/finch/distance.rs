use std::collections::HashMap;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Rows per parallel task. Fixed so results never depend on the thread count.
const ROW_BLOCK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistanceMetric {
    /// `0.5 * (KL(p||q) + KL(q||p))` with probabilities clamped below at `epsilon_clamp`.
    SymmetricMeanKl {
        epsilon_clamp: f64,
    },
    Euclidean,
}

impl DistanceMetric {
    pub const DEFAULT_CLAMP: f64 = 1e-12;

    pub fn kl() -> Self {
        DistanceMetric::SymmetricMeanKl {
            epsilon_clamp: Self::DEFAULT_CLAMP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let DistanceMetric::SymmetricMeanKl { epsilon_clamp } = *self {
            if !(epsilon_clamp > 0.0 && epsilon_clamp <= 1e-6) {
                return Err(Error::arg(format!(
                    "epsilon_clamp must lie in (0, 1e-6], got {epsilon_clamp}"
                )));
            }
        }
        Ok(())
    }

    /// Distance between two single samples, computed directly (no GEMM).
    pub fn between<T: Scalar>(&self, a: &[T], b: &[T]) -> f64 {
        match *self {
            DistanceMetric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(&x, &y)| {
                    let d = x.as_f64() - y.as_f64();
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            DistanceMetric::SymmetricMeanKl { epsilon_clamp } => {
                let mut acc = 0.0;
                for (&x, &y) in a.iter().zip(b) {
                    let p = x.as_f64().max(epsilon_clamp);
                    let q = y.as_f64().max(epsilon_clamp);
                    acc += (x.as_f64() - y.as_f64()) * (p.ln() - q.ln());
                }
                (0.5 * acc).max(0.0)
            }
        }
    }
}

fn check_distributions(samples: &Array2<f64>) -> Result<()> {
    for (i, row) in samples.outer_iter().enumerate() {
        if let Some(v) = row.iter().find(|&&v| v < -1e-9 || !v.is_finite()) {
            return Err(Error::Domain(format!(
                "sample {i} has invalid probability {v}"
            )));
        }
        let s = row.sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::Domain(format!("sample {i} sums to {s}, not 1")));
        }
    }
    Ok(())
}

/// Groups bitwise-identical rows. Returns (representative row per group, group of each row).
fn dedup_rows(x: &Array2<f64>) -> (Vec<usize>, Vec<usize>) {
    let mut groups: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut reps = Vec::new();
    let mut of = Vec::with_capacity(x.nrows());
    for (i, row) in x.outer_iter().enumerate() {
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        let next = reps.len();
        let g = *groups.entry(key).or_insert(next);
        if g == next {
            reps.push(i);
        }
        of.push(g);
    }
    (reps, of)
}

/// Symmetric mean KL over rows of `p` (already validated), via one GEMM.
fn kl_matrix(p: &Array2<f64>, eps: f64) -> Array2<f64> {
    let n = p.nrows();
    let logs = p.mapv(|v| v.max(eps).ln());
    let entropy: Array1<f64> = (p * &logs).sum_axis(Axis(1));
    // cross[i][j] = sum_k p_i[k] * ln q_j[k]
    let mut cross = Array2::<f64>::zeros((n, n));
    let lt = logs.t();
    let tasks: Vec<_> = cross
        .axis_chunks_iter_mut(Axis(0), ROW_BLOCK)
        .zip(p.axis_chunks_iter(Axis(0), ROW_BLOCK))
        .collect();
    tasks.into_par_iter().for_each(|(mut out, rows)| {
        general_mat_mul(1.0, &rows, &lt, 0.0, &mut out);
    });
    let mut d = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (entropy[i] + entropy[j] - cross[[i, j]] - cross[[j, i]]);
            let v = v.max(0.0);
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

fn euclidean_matrix(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut d = Array2::<f64>::zeros((n, n));
    let tasks: Vec<_> = d
        .axis_chunks_iter_mut(Axis(0), ROW_BLOCK)
        .enumerate()
        .collect();
    tasks.into_par_iter().for_each(|(b, mut out)| {
        for (r, mut row) in out.outer_iter_mut().enumerate() {
            let i = b * ROW_BLOCK + r;
            let xi = x.row(i);
            for j in 0..n {
                if j != i {
                    let xj = x.row(j);
                    let s: f64 = xi
                        .iter()
                        .zip(xj.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    row[j] = s.sqrt();
                }
            }
        }
    });
    d
}

/// Full pairwise distance matrix over the rows of `samples`, accumulated in f64.
///
/// The result is exactly symmetric with a zero diagonal; bitwise-identical rows
/// are at distance exactly 0. Rows are processed in fixed-size parallel blocks.
pub fn pairwise_distance<T: Scalar>(
    samples: ArrayView2<'_, T>,
    metric: DistanceMetric,
) -> Result<Array2<f64>> {
    metric.validate()?;
    let x = samples.mapv(|v| v.as_f64());
    if let DistanceMetric::SymmetricMeanKl { .. } = metric {
        check_distributions(&x)?;
    }
    let (reps, of) = dedup_rows(&x);
    let unique = x.select(Axis(0), &reps);
    let du = match metric {
        DistanceMetric::SymmetricMeanKl { epsilon_clamp } => kl_matrix(&unique, epsilon_clamp),
        DistanceMetric::Euclidean => euclidean_matrix(&unique),
    };
    if reps.len() == x.nrows() {
        return Ok(du);
    }
    let n = x.nrows();
    Ok(Array2::from_shape_fn((n, n), |(i, j)| du[[of[i], of[j]]]))
}

/// Like [`pairwise_distance`] for a list of equal-length vectors.
pub fn pairwise_distance_vecs<T: Scalar>(
    samples: &[Vec<T>],
    metric: DistanceMetric,
) -> Result<Array2<f64>> {
    let n = samples.len();
    let dim = samples.first().map_or(0, Vec::len);
    if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.len() != dim) {
        return Err(Error::arg(format!(
            "sample {i} has dimension {}, expected {dim}",
            s.len()
        )));
    }
    let flat: Vec<T> = samples.iter().flatten().copied().collect();
    let x = Array2::from_shape_vec((n, dim), flat).expect("checked dimensions");
    pairwise_distance(x.view(), metric)
}
