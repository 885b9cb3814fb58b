use num_bigint::BigInt;
use num_traits::{Float, Zero};

use crate::error::{Error, Result};
use crate::mask::Mask;

/// Nonnegative end-of-text attention map on the aggregation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    h: usize,
    w: usize,
    e: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(h: usize, w: usize, e: Vec<f64>) -> Result<Self> {
        if e.len() != h * w || e.is_empty() {
            return Err(Error::arg(format!(
                "saliency map for {h}x{w} needs {} values, got {}",
                h * w,
                e.len()
            )));
        }
        if let Some(i) = e.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain(format!("saliency entry {i} is {}", e[i])));
        }
        Ok(SaliencyMap { h, w, e })
    }

    pub fn side(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn values(&self) -> &[f64] {
        &self.e
    }

    pub fn total(&self) -> f64 {
        self.e.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.total() / self.e.len() as f64
    }
}

/// Exact integer image of a nonnegative double, scaled by 2^1075.
fn exact(v: f64) -> BigInt {
    let (mantissa, exponent, _) = v.integer_decode();
    if mantissa == 0 {
        return BigInt::zero();
    }
    BigInt::from(mantissa) << ((exponent as i32 + 1075) as usize)
}

/// Indices of masks whose mean saliency is not strictly below the global mean.
///
/// The comparison `sum_M / |M| < sum / n` is evaluated exactly on the binary
/// values, so ties (e.g. a uniform map) are kept.
pub fn filter_indices(masks: &[Mask], e: &SaliencyMap) -> Result<Vec<usize>> {
    let exact_e: Vec<BigInt> = e.e.iter().map(|&v| exact(v)).collect();
    let total: BigInt = exact_e.iter().sum();
    let n = BigInt::from(exact_e.len());
    let mut kept = Vec::new();
    for (k, m) in masks.iter().enumerate() {
        if (m.height(), m.width()) != (e.h, e.w) {
            return Err(Error::arg(format!(
                "mask {k} is {}x{}, saliency is {}x{}",
                m.height(),
                m.width(),
                e.h,
                e.w
            )));
        }
        if m.is_empty() {
            return Err(Error::arg(format!("mask {k} is empty")));
        }
        let inside: BigInt = m.indices().map(|i| &exact_e[i]).sum();
        let below = inside * &n < &total * BigInt::from(m.count());
        if !below {
            kept.push(k);
        }
    }
    Ok(kept)
}

/// Drops masks with mean saliency strictly below the global mean; survivors keep their order.
pub fn filter_masks(masks: &[Mask], e: &SaliencyMap) -> Result<Vec<Mask>> {
    Ok(filter_indices(masks, e)?
        .into_iter()
        .map(|k| masks[k].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_keeps_everything() {
        let e = SaliencyMap::new(2, 2, vec![0.1; 4]).unwrap();
        let masks = vec![
            Mask::from_indices(2, 2, [0]),
            Mask::from_indices(2, 2, [1, 2, 3]),
        ];
        assert_eq!(filter_indices(&masks, &e).unwrap(), vec![0, 1]);
    }

    #[test]
    fn ties_are_exact_despite_rounding() {
        // Naive doubles give 0.1 < (0.1 + 0.1 + 0.1) / 3 and would drop the mask.
        let e = SaliencyMap::new(1, 3, vec![0.1; 3]).unwrap();
        assert!(0.1 < e.total() / 3.0);
        let masks = vec![Mask::from_indices(1, 3, [0])];
        assert_eq!(filter_indices(&masks, &e).unwrap(), vec![0]);
    }

    #[test]
    fn block_example() {
        let mut v = vec![0.0; 16];
        for i in [0, 1, 4, 5] {
            v[i] = 1.0;
        }
        let e = SaliencyMap::new(4, 4, v).unwrap();
        let block = Mask::from_indices(4, 4, [0, 1, 4, 5]);
        let zero_row = Mask::from_indices(4, 4, [12, 13, 14, 15]);
        let kept = filter_masks(&[block.clone(), zero_row], &e).unwrap();
        assert_eq!(kept, vec![block]);
    }

    #[test]
    fn empty_mask_rejected() {
        let e = SaliencyMap::new(2, 2, vec![1.0; 4]).unwrap();
        assert!(matches!(
            filter_masks(&[Mask::empty(2, 2)], &e),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn exact_handles_subnormals() {
        let tiny = f64::from_bits(1);
        assert_eq!(exact(tiny), BigInt::from(2));
        assert_eq!(exact(1.0), BigInt::from(1) << 1075usize);
    }
}
