use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// `g` embeddings per concept, stored row-wise with token `(i, j)` at row `i * g + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitTable {
    n: usize,
    g: usize,
    tokens: Array2<f64>,
}

impl SplitTable {
    pub fn new(n: usize, g: usize, tokens: Array2<f64>) -> Result<Self> {
        if g == 0 || n == 0 {
            return Err(Error::arg("split table needs n >= 1 and g >= 1"));
        }
        if tokens.nrows() != n * g || tokens.ncols() == 0 {
            return Err(Error::arg(format!(
                "expected {} token rows for n = {n}, g = {g}, got {}",
                n * g,
                tokens.nrows()
            )));
        }
        Ok(SplitTable { n, g, tokens })
    }

    /// Standard normal draws scaled to unit norm.
    pub fn random(n: usize, g: usize, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tokens = Array2::<f64>::zeros((n * g, dim));
        for mut row in tokens.outer_iter_mut() {
            loop {
                row.mapv_inplace(|_| rng.sample(StandardNormal));
                let norm = row.dot(&row).sqrt();
                if norm > 1e-8 {
                    row.mapv_inplace(|v| v / norm);
                    break;
                }
            }
        }
        SplitTable::new(n, g, tokens)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn dim(&self) -> usize {
        self.tokens.ncols()
    }

    pub fn tokens(&self) -> &Array2<f64> {
        &self.tokens
    }

    pub fn token(&self, i: usize, j: usize) -> ArrayView1<'_, f64> {
        self.tokens.row(i * self.g + j)
    }

    pub fn token_mut(&mut self, i: usize, j: usize) -> ArrayViewMut1<'_, f64> {
        self.tokens.row_mut(i * self.g + j)
    }
}

/// Mean of the `g` embeddings of every concept, `N x dim`.
pub fn merge_tokens(table: &SplitTable) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((table.n, table.dim()));
    for i in 0..table.n {
        let block = table
            .tokens
            .slice(ndarray::s![i * table.g..(i + 1) * table.g, ..]);
        out.row_mut(i)
            .assign(&block.sum_axis(Axis(0)).mapv(|v| v / table.g as f64));
    }
    out
}
