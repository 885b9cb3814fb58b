use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Source sampling position for one output index under the
/// align-corners-false convention: `src = (dst + 0.5) * in / out - 0.5`,
/// clamped below at 0. Returns the two taps and the weight of the upper tap.
fn taps(dst: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    let scale = in_len as f64 / out_len as f64;
    let src = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
    let lo = (src.floor() as usize).min(in_len - 1);
    let hi = (lo + 1).min(in_len - 1);
    let frac = if lo == hi { 0.0 } else { src - lo as f64 };
    (lo, hi, frac)
}

/// Bilinear resampling of a 2-D map to `target = (h, w)` (align corners = false).
///
/// Constant maps and identity-sized targets are reproduced exactly.
pub fn bilinear_resize<T: Scalar>(
    map: ArrayView2<'_, T>,
    target: (usize, usize),
) -> Result<Array2<T>> {
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(Error::arg(format!(
            "resize target {th}x{tw} has a zero extent"
        )));
    }
    let (sh, sw) = map.dim();
    if sh == 0 || sw == 0 {
        return Err(Error::arg("resize source has a zero extent"));
    }
    if (sh, sw) == (th, tw) {
        return Ok(map.to_owned());
    }
    let rows: Vec<_> = (0..th).map(|y| taps(y, sh, th)).collect();
    let cols: Vec<_> = (0..tw).map(|x| taps(x, sw, tw)).collect();
    Ok(Array2::from_shape_fn((th, tw), |(y, x)| {
        let (y0, y1, fy) = rows[y];
        let (x0, x1, fx) = cols[x];
        let fy = T::from_f64_lossy(fy);
        let fx = T::from_f64_lossy(fx);
        // Lerp form a + t*(b - a) keeps constants exact.
        let top = map[[y0, x0]] + fx * (map[[y0, x1]] - map[[y0, x0]]);
        let bottom = map[[y1, x0]] + fx * (map[[y1, x1]] - map[[y1, x0]]);
        top + fy * (bottom - top)
    }))
}
