use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::transport::hungarian;

/// Intersection over union of two same-shaped masks.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    let union = a.union_count(b)?;
    if union == 0 {
        return Err(Error::arg("IoU of two empty masks is undefined"));
    }
    Ok(a.intersection_count(b)? as f64 / union as f64)
}

/// One matched pair of the assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub gt: usize,
    pub pred: usize,
    pub iou: f64,
}

/// Hungarian-matched localization scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub pairs: Vec<MatchedPair>,
    /// Ground-truth count.
    pub m: usize,
    /// Predicted count.
    pub n: usize,
    /// `min(m, n)`.
    pub m_prime: usize,
    /// Matched pairs with non-zero IoU.
    pub r: usize,
    /// Sum of matched IoUs divided by the predicted count.
    pub avg_iou: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Matches predictions to ground truth by maximizing total IoU.
pub fn match_concepts(pred: &[Mask], gt: &[Mask]) -> Result<MatchReport> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::arg(
            "match_concepts needs non-empty prediction and ground-truth sets",
        ));
    }
    if let Some(k) = pred.iter().chain(gt).position(Mask::is_empty) {
        return Err(Error::arg(format!(
            "mask {k} of the combined sets is empty"
        )));
    }
    let (m, n) = (gt.len(), pred.len());
    let mut table = Array2::<f64>::zeros((m, n));
    for (i, g) in gt.iter().enumerate() {
        for (j, p) in pred.iter().enumerate() {
            table[[i, j]] = iou(g, p)?;
        }
    }
    let assignment = hungarian(table.view(), true)?;
    let pairs: Vec<MatchedPair> = assignment
        .pairs
        .iter()
        .map(|&(i, j)| MatchedPair {
            gt: i,
            pred: j,
            iou: table[[i, j]],
        })
        .collect();
    let r = pairs.iter().filter(|p| p.iou != 0.0).count();
    let total: f64 = pairs.iter().map(|p| p.iou).sum();
    Ok(MatchReport {
        m,
        n,
        m_prime: m.min(n),
        r,
        avg_iou: total / n as f64,
        recall: r as f64 / m as f64,
        precision: r as f64 / n as f64,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(idx: &[usize]) -> Mask {
        Mask::from_indices(4, 4, idx.iter().copied())
    }

    #[test]
    fn iou_basics() {
        let a = m(&[0, 1]);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &m(&[5])).unwrap(), 0.0);
        assert_eq!(iou(&a, &m(&[0, 1, 2, 3])).unwrap(), 0.5);
        assert!(iou(&a, &Mask::empty(2, 2)).is_err());
    }

    #[test]
    fn identical_sets_score_one() {
        let gt = vec![m(&[0, 1]), m(&[5, 6]), m(&[15])];
        let r = match_concepts(&gt, &gt).unwrap();
        assert_eq!((r.avg_iou, r.recall, r.precision), (1.0, 1.0, 1.0));
    }

    #[test]
    fn fewer_predictions() {
        let gt = vec![m(&[0, 1]), m(&[5, 6]), m(&[15])];
        let pred = vec![m(&[6]), m(&[0])];
        let r = match_concepts(&pred, &gt).unwrap();
        assert_eq!(r.r, 2);
        assert_eq!(r.recall, 2.0 / 3.0);
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.avg_iou, (0.5 + 0.5) / 2.0);
    }

    #[test]
    fn spurious_prediction_lowers_precision_only() {
        let gt = vec![m(&[0, 1]), m(&[5, 6])];
        let pred = vec![m(&[0, 1]), m(&[5, 6])];
        let base = match_concepts(&pred, &gt).unwrap();
        let mut more = pred.clone();
        more.push(m(&[12]));
        let r = match_concepts(&more, &gt).unwrap();
        assert_eq!(r.recall, base.recall);
        assert!(r.precision < base.precision);
    }

    #[test]
    fn empty_sets_rejected() {
        assert!(match_concepts(&[], &[m(&[0])]).is_err());
    }
}
