use ndarray::Array2;

use crate::error::{Error, Result};

/// Euclidean distance between the row-major grid cells `p` and `q` of an `h x w` grid.
///
/// With `normalize`, distances are divided by the grid diagonal so the
/// farthest corners are at distance 1 (a 1x1 grid stays all zero).
pub fn location_cost(h: usize, w: usize, normalize: bool) -> Result<Array2<f64>> {
    if h == 0 || w == 0 {
        return Err(Error::arg(format!("grid {h}x{w} has a zero extent")));
    }
    let diag = diagonal(h, w);
    let n = h * w;
    Ok(Array2::from_shape_fn((n, n), |(p, q)| {
        let dy = (p / w) as f64 - (q / w) as f64;
        let dx = (p % w) as f64 - (q % w) as f64;
        let d = (dy * dy + dx * dx).sqrt();
        if normalize && diag > 0.0 {
            d / diag
        } else {
            d
        }
    }))
}

pub(crate) fn diagonal(h: usize, w: usize) -> f64 {
    let (a, b) = ((h - 1) as f64, (w - 1) as f64);
    (a * a + b * b).sqrt()
}
