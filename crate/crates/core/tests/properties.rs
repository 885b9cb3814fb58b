use conceptkit::evalbench::{
    classify_topk, iou, match_concepts, FeatureBank, Prototype, Query, Similarity,
};
use conceptkit::finch::{pairwise_distance, DistanceMetric};
use conceptkit::localize::{filter_indices, SaliencyMap};
use conceptkit::sandbox::{contrastive_loss, merge_tokens, SplitTable};
use conceptkit::tensorio::{bilinear_resize, Tensor};
use conceptkit::transport::{emd, hungarian, location_cost, sinkhorn, SinkhornOptions};
use conceptkit::Mask;
use ndarray::Array2;
use proptest::prelude::*;

fn grid_mask(h: usize, w: usize) -> impl Strategy<Value = Mask> {
    prop::collection::vec(any::<bool>(), h * w)
        .prop_filter("non-empty", |b| b.iter().any(|&x| x))
        .prop_map(move |b| Mask::from_bits(h, w, b).unwrap())
}

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn iou_is_symmetric_and_bounded(a in grid_mask(5, 6), b in grid_mask(5, 6)) {
        let x = iou(&a, &b).unwrap();
        prop_assert_eq!(x, iou(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn match_scores_ignore_prediction_order(
        pred in prop::collection::vec(grid_mask(4, 4), 1..5),
        gt in prop::collection::vec(grid_mask(4, 4), 1..5),
        rot in 0usize..5,
    ) {
        let a = match_concepts(&pred, &gt).unwrap();
        let mut shuffled = pred.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        let b = match_concepts(&shuffled, &gt).unwrap();
        prop_assert!((a.avg_iou - b.avg_iou).abs() < 1e-12);
        prop_assert_eq!(a.n, b.n);
        prop_assert!(a.r <= a.m_prime);
    }

    #[test]
    fn filter_agrees_with_integer_means(
        e in prop::collection::vec(0u32..50, 16),
        groups in prop::collection::vec(0usize..4, 16),
    ) {
        // Integer saliency: mean comparisons are exact in integer arithmetic.
        let masks: Vec<Mask> = (0..4)
            .map(|g| Mask::from_indices(4, 4, (0..16).filter(|&c| groups[c] == g)))
            .filter(|m| !m.is_empty())
            .collect();
        prop_assume!(e.iter().any(|&v| v > 0));
        let map = SaliencyMap::new(4, 4, e.iter().map(|&v| f64::from(v)).collect()).unwrap();
        let kept = filter_indices(&masks, &map).unwrap();
        let total: u64 = e.iter().map(|&v| u64::from(v)).sum();
        let want: Vec<usize> = masks
            .iter()
            .enumerate()
            .filter(|(_, m)| {
                let s: u64 = m.indices().map(|c| u64::from(e[c])).sum();
                // Mean over the mask is not below the mean over the grid.
                s * 16 >= total * m.count() as u64
            })
            .map(|(k, _)| k)
            .collect();
        prop_assert_eq!(kept, want);
    }

    #[test]
    fn merge_ignores_token_order(
        vals in prop::collection::vec(-100i32..100, 3 * 4 * 2),
        shift in 0usize..4,
    ) {
        let t = Array2::from_shape_fn((12, 2), |(r, c)| f64::from(vals[r * 2 + c]));
        let mut permuted = t.clone();
        for i in 0..3 {
            for j in 0..4 {
                permuted.row_mut(i * 4 + j).assign(&t.row(i * 4 + (j + shift) % 4));
            }
        }
        let a = merge_tokens(&SplitTable::new(3, 4, t).unwrap());
        let b = merge_tokens(&SplitTable::new(3, 4, permuted).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn contrastive_loss_is_rotation_invariant(
        vals in prop::collection::vec(-0.5f64..0.5, 2 * 3 * 3),
        angle in 0.0f64..std::f64::consts::TAU,
    ) {
        let t = Array2::from_shape_vec((6, 3), vals).unwrap();
        let (c, s) = (angle.cos(), angle.sin());
        let rotated = Array2::from_shape_fn((6, 3), |(r, k)| match k {
            0 => c * t[[r, 0]] - s * t[[r, 1]],
            1 => s * t[[r, 0]] + c * t[[r, 1]],
            _ => t[[r, 2]],
        });
        let a = contrastive_loss(&SplitTable::new(2, 3, t).unwrap(), 0.07).unwrap().0;
        let b = contrastive_loss(&SplitTable::new(2, 3, rotated).unwrap(), 0.07).unwrap().0;
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn hungarian_beats_the_identity_assignment(vals in prop::collection::vec(-1000i64..1000, 36)) {
        let c = Array2::from_shape_vec((6, 6), vals).unwrap();
        let a = hungarian(c.view(), false).unwrap();
        let diag: i64 = (0..6).map(|i| c[[i, i]]).sum();
        let anti: i64 = (0..6).map(|i| c[[i, 5 - i]]).sum();
        prop_assert!(a.total <= diag && a.total <= anti);
        let max = hungarian(c.view(), true).unwrap();
        prop_assert!(max.total >= diag && max.total >= a.total);
    }

    #[test]
    fn emd_is_a_symmetric_semimetric(p in simplex(9), q in simplex(9)) {
        let c = location_cost(3, 3, true).unwrap();
        let pq = emd(&p, &q, c.view()).unwrap().objective;
        let qp = emd(&q, &p, c.view()).unwrap().objective;
        prop_assert!(pq >= 0.0);
        prop_assert!((pq - qp).abs() < 1e-12);
        prop_assert!(emd(&p, &p, c.view()).unwrap().objective.abs() < 1e-12);
    }

    #[test]
    fn sinkhorn_respects_marginals(p in simplex(6), q in simplex(6)) {
        let c = location_cost(2, 3, true).unwrap();
        let plan = sinkhorn(&p, &q, c.view(), SinkhornOptions { eps: 0.1, ..Default::default() }).unwrap();
        prop_assert!(plan.converged);
        for (r, x) in plan.row_sums().iter().zip(&p) {
            prop_assert!((r - x).abs() < 1e-8);
        }
        for (r, x) in plan.col_sums().iter().zip(&q) {
            prop_assert!((r - x).abs() < 1e-6);
        }
    }

    #[test]
    fn kl_matrix_is_symmetric_nonnegative(rows in prop::collection::vec(simplex(5), 2..7)) {
        let x = Array2::from_shape_fn((rows.len(), 5), |(i, j)| rows[i][j]);
        let d = pairwise_distance(x.view(), DistanceMetric::kl()).unwrap();
        for i in 0..rows.len() {
            prop_assert_eq!(d[[i, i]], 0.0);
            for j in 0..rows.len() {
                prop_assert_eq!(d[[i, j]], d[[j, i]]);
                prop_assert!(d[[i, j]] >= 0.0);
            }
        }
    }

    #[test]
    fn rawt_roundtrip_is_bitwise(shape in prop::collection::vec(1usize..5, 1..4), seed in any::<u64>()) {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n as u64).map(|k| f64::from_bits(seed.wrapping_mul(k + 1) >> 2)).collect();
        let t = Tensor::from_vec(shape, data).unwrap();
        let back = Tensor::from_bytes(&t.to_bytes()).unwrap();
        prop_assert!(t.bit_eq(&back));
    }

    #[test]
    fn resize_keeps_constants(v in 0.0f64..10.0, h in 1usize..9, w in 1usize..9, th in 1usize..17, tw in 1usize..17) {
        let m = Array2::from_elem((h, w), v);
        let r = bilinear_resize(m.view(), (th, tw)).unwrap();
        prop_assert!(r.iter().all(|&x| x == v));
    }

    #[test]
    fn accuracy_grows_with_k(
        protos in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 2..6),
        queries in prop::collection::vec((0usize..6, prop::collection::vec(-1.0f64..1.0, 3)), 1..10),
    ) {
        let n = protos.len();
        let bank = FeatureBank::new(
            protos.into_iter().enumerate().map(|(id, vector)| Prototype { id, label: format!("c{id}"), vector }).collect(),
            queries.into_iter().map(|(l, vector)| Query { label: l % n, vector }).collect(),
        );
        prop_assume!(bank.is_ok());
        let bank = bank.unwrap();
        let mut last = 0.0;
        for k in 1..=n {
            let acc = classify_topk(&bank, k, Similarity::Dot).unwrap();
            prop_assert!(acc >= last);
            last = acc;
        }
        prop_assert_eq!(last, 1.0);
    }
}
