use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::scene::SyntheticScene;
use super::split::SplitTable;
use crate::error::{Error, Result};
use crate::transport::{
    emd_gradient, location_cost, sinkhorn_warm, GradientVia, GridSinkhorn, SinkhornOptions,
};

fn noise_rng(step_seed: u64, i: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(step_seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn check_concept(scene: &SyntheticScene, v: &[f64], i: usize) -> Result<()> {
    if i >= scene.n_concepts() {
        return Err(Error::arg(format!(
            "concept {i} out of range for {} concepts",
            scene.n_concepts()
        )));
    }
    if v.len() != scene.dim() {
        return Err(Error::arg(format!(
            "embedding has {} entries, expected {}",
            v.len(),
            scene.dim()
        )));
    }
    Ok(())
}

/// `phi (v - u_i)` for one concept.
fn projected_gap(scene: &SyntheticScene, v: &[f64], i: usize) -> Vec<f64> {
    let d: Vec<f64> = v.iter().zip(scene.u.row(i)).map(|(a, b)| a - b).collect();
    scene
        .phi
        .outer_iter()
        .map(|row| row.iter().zip(&d).map(|(p, x)| p * x).sum())
        .collect()
}

/// Residual of the synthetic denoiser, `(h*w) x C`, zero outside mask `i`.
///
/// Masked cells hold `phi (v - u_i) + sigma * xi`, with `xi` standard normal
/// drawn from `step_seed` in cell order.
pub fn oracle_residual(
    scene: &SyntheticScene,
    v: &[f64],
    i: usize,
    step_seed: u64,
) -> Result<Array2<f64>> {
    check_concept(scene, v, i)?;
    let gap = projected_gap(scene, v, i);
    let c = scene.channels();
    let mut out = Array2::<f64>::zeros((scene.h * scene.w, c));
    let mut rng = noise_rng(step_seed, i);
    for p in scene.masks[i].indices() {
        for k in 0..c {
            let xi: f64 = rng.sample(StandardNormal);
            out[[p, k]] = gap[k] + scene.sigma * xi;
        }
    }
    Ok(out)
}

/// Mean squared residual over mask `i`, and its gradient in `v`.
pub fn masked_loss(
    scene: &SyntheticScene,
    v: &[f64],
    i: usize,
    step_seed: u64,
) -> Result<(f64, Vec<f64>)> {
    check_concept(scene, v, i)?;
    let gap = projected_gap(scene, v, i);
    let c = scene.channels();
    let mut rng = noise_rng(step_seed, i);
    let count = scene.masks[i].count();
    let mut sum_sq = 0.0;
    let mut sum_r = vec![0.0; c];
    for _ in 0..count {
        for k in 0..c {
            let xi: f64 = rng.sample(StandardNormal);
            let r = gap[k] + scene.sigma * xi;
            sum_sq += r * r;
            sum_r[k] += r;
        }
    }
    let m = count as f64;
    let grad = (0..scene.dim())
        .map(|t| 2.0 / m * (0..c).map(|k| scene.phi[[k, t]] * sum_r[k]).sum::<f64>())
        .collect();
    Ok((sum_sq / m, grad))
}

/// Softmax over grid cells of `<k_p, v> / sqrt(dim)`.
pub fn cross_attention(scene: &SyntheticScene, v: &[f64]) -> Vec<f64> {
    let scale = 1.0 / (scene.dim() as f64).sqrt();
    let vv = ArrayView1::from(v);
    let logits: Vec<f64> = scene
        .keys
        .outer_iter()
        .map(|k| k.dot(&vv) * scale)
        .collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn logsumexp(x: &[f64]) -> f64 {
    let top = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + x.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
}

/// Contrastive loss over the split table and its gradient for every token.
///
/// For token `a = (i, j)` with similarities `s_ab = <v_a, v_b> / tau`:
/// `L_a = -(1 / (g N)) ln( sum_{b in i, b != a} e^{s_ab} / sum_{b != a} e^{s_ab} )`.
/// The total is the sum over all tokens.
pub fn contrastive_loss(table: &SplitTable, tau: f64) -> Result<(f64, Array2<f64>)> {
    if table.g() < 2 {
        return Err(Error::Degenerate(
            "contrastive loss needs at least two tokens per concept".into(),
        ));
    }
    if !(tau > 0.0) {
        return Err(Error::arg(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    let (n, g) = (table.n(), table.g());
    let t = table.tokens();
    let total_tokens = n * g;
    let sim = t.dot(&t.t()) / tau;
    let weight = 1.0 / total_tokens as f64;
    let mut loss = 0.0;
    // coef[a][b]: derivative of the total loss with respect to s_ab.
    let mut coef = Array2::<f64>::zeros((total_tokens, total_tokens));
    for a in 0..total_tokens {
        let concept = a / g;
        let same: Vec<usize> = (concept * g..(concept + 1) * g)
            .filter(|&b| b != a)
            .collect();
        let others: Vec<usize> = (0..total_tokens).filter(|&b| b != a).collect();
        let s_same: Vec<f64> = same.iter().map(|&b| sim[[a, b]]).collect();
        let s_all: Vec<f64> = others.iter().map(|&b| sim[[a, b]]).collect();
        let (lse_same, lse_all) = (logsumexp(&s_same), logsumexp(&s_all));
        loss += -weight * (lse_same - lse_all);
        for (&b, &s) in same.iter().zip(&s_same) {
            coef[[a, b]] -= weight * (s - lse_same).exp();
        }
        for (&b, &s) in others.iter().zip(&s_all) {
            coef[[a, b]] += weight * (s - lse_all).exp();
        }
    }
    // s_ab = <v_a, v_b> / tau, so d/dv_a picks up (coef_ab + coef_ba) v_b / tau.
    let sym = &coef + &coef.t();
    let grad = sym.dot(t) / tau;
    Ok((loss, grad))
}

/// How the alignment regularizer is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "via", rename_all = "snake_case")]
pub enum AlignVia {
    /// Exact EMD with its dual potential (small grids only).
    Exact,
    /// Entropic transport; on the FFT grid solver when `eps` allows it.
    Sinkhorn {
        eps: f64,
        max_iters: usize,
        tol: f64,
    },
}

impl Default for AlignVia {
    fn default() -> Self {
        AlignVia::Sinkhorn {
            eps: 0.05,
            max_iters: 500,
            tol: 1e-7,
        }
    }
}

enum Backend {
    Dense(Array2<f64>, AlignVia),
    Grid(GridSinkhorn, usize, f64),
}

/// Transport value and gradient against a target on one grid, with reusable state.
pub struct Aligner {
    backend: Backend,
}

impl std::fmt::Debug for Aligner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.backend {
            Backend::Dense(..) => "dense",
            Backend::Grid(..) => "grid",
        };
        f.debug_struct("Aligner").field("backend", &kind).finish()
    }
}

/// Warm-start potentials carried between alignment calls.
pub type WarmStart = (Vec<f64>, Vec<f64>);

impl Aligner {
    /// Grid cost is Euclidean cell distance divided by the grid diagonal.
    pub fn new(h: usize, w: usize, via: AlignVia) -> Result<Self> {
        let backend = match via {
            AlignVia::Sinkhorn {
                eps,
                max_iters,
                tol,
            } => match GridSinkhorn::new(h, w, true, eps) {
                Ok(grid) => Backend::Grid(grid, max_iters, tol),
                Err(Error::Argument(_)) if eps > 0.0 => {
                    Backend::Dense(location_cost(h, w, true)?, via)
                }
                Err(e) => return Err(e),
            },
            AlignVia::Exact => Backend::Dense(location_cost(h, w, true)?, via),
        };
        Ok(Aligner { backend })
    }

    /// Value of the transport term between `attn` and `target`, and its
    /// zero-mean gradient with respect to `attn`.
    pub fn value_grad(
        &self,
        attn: &[f64],
        target: &[f64],
        warm: Option<&mut WarmStart>,
    ) -> Result<(f64, Vec<f64>)> {
        match &self.backend {
            Backend::Grid(grid, max_iters, tol) => {
                let sol = grid.solve(attn, target, *max_iters, *tol, warm)?;
                Ok((sol.regularized, sol.gradient()))
            }
            Backend::Dense(c, AlignVia::Exact) => {
                emd_gradient(attn, target, c.view(), GradientVia::ExactDuals)
            }
            Backend::Dense(
                c,
                AlignVia::Sinkhorn {
                    eps,
                    max_iters,
                    tol,
                },
            ) => {
                let opts = SinkhornOptions {
                    eps: *eps,
                    max_iters: *max_iters,
                    tol: *tol,
                };
                let start = warm.as_deref().map(|(f, g)| (f.as_slice(), g.as_slice()));
                let plan = sinkhorn_warm(attn, target, c.view(), opts, start)?;
                let value = plan
                    .regularized
                    .expect("sinkhorn sets the regularized value");
                let (mut f, g) = plan.duals.expect("sinkhorn sets duals");
                if let Some(wm) = warm {
                    *wm = (f.clone(), g);
                }
                crate::transport::center(&mut f);
                Ok((value, f))
            }
        }
    }
}

/// Chains a gradient over attention cells back to the embedding through the softmax.
fn through_softmax(scene: &SyntheticScene, attn: &[f64], grad_attn: &[f64]) -> Vec<f64> {
    let mean: f64 = attn.iter().zip(grad_attn).map(|(a, g)| a * g).sum();
    let scale = 1.0 / (scene.dim() as f64).sqrt();
    let mut out = vec![0.0; scene.dim()];
    for (p, key) in scene.keys.outer_iter().enumerate() {
        let w = attn[p] * (grad_attn[p] - mean) * scale;
        if w != 0.0 {
            for (o, k) in out.iter_mut().zip(key) {
                *o += w * k;
            }
        }
    }
    out
}

/// Alignment loss with a prepared [`Aligner`] and optional warm start.
pub fn alignment_loss_with(
    scene: &SyntheticScene,
    v: &[f64],
    target: &[f64],
    aligner: &Aligner,
    warm: Option<&mut WarmStart>,
) -> Result<(f64, Vec<f64>)> {
    if v.len() != scene.dim() {
        return Err(Error::arg(format!(
            "embedding has {} entries, expected {}",
            v.len(),
            scene.dim()
        )));
    }
    let attn = cross_attention(scene, v);
    let (value, g_attn) = aligner.value_grad(&attn, target, warm)?;
    Ok((value, through_softmax(scene, &attn, &g_attn)))
}

/// Transport distance between the token's cross-attention and `target`, with its gradient in `v`.
pub fn alignment_loss(
    scene: &SyntheticScene,
    v: &[f64],
    target: &[f64],
    via: AlignVia,
) -> Result<(f64, Vec<f64>)> {
    if target.len() != scene.h * scene.w {
        return Err(Error::arg("target must cover the scene grid"));
    }
    let aligner = Aligner::new(scene.h, scene.w, via)?;
    alignment_loss_with(scene, v, target, &aligner, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::Mask;
    use crate::sandbox::SceneParams;
    use ndarray::array;

    fn scene(sigma: f64, seed: u64) -> SyntheticScene {
        let masks = vec![
            Mask::from_indices(3, 4, [0, 1, 4]),
            Mask::from_indices(3, 4, [7, 10, 11]),
        ];
        let params = SceneParams {
            sigma,
            channels: 5,
            embed_dim: 3,
            key_scale: 2.0,
            ..Default::default()
        };
        SyntheticScene::generate(3, 4, masks, &params, seed).unwrap()
    }

    #[test]
    fn residual_vanishes_at_truth() {
        let s = scene(0.0, 1);
        let u: Vec<f64> = s.u.row(0).to_vec();
        assert!(oracle_residual(&s, &u, 0, 9)
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
        let (l, g) = masked_loss(&s, &u, 0, 9).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn residual_norm_is_constant_per_cell() {
        let s = scene(0.0, 2);
        let v = vec![0.3, -0.1, 0.7];
        let r = oracle_residual(&s, &v, 1, 0).unwrap();
        let gap = projected_gap(&s, &v, 1);
        let per_cell: f64 = gap.iter().map(|x| x * x).sum();
        let total: f64 = r.iter().map(|x| x * x).sum();
        assert!((total - 3.0 * per_cell).abs() < 1e-12);
    }

    #[test]
    fn noisy_residual_is_deterministic_and_matches_loss() {
        let s = scene(0.5, 3);
        let v = vec![0.1, 0.2, 0.3];
        let a = oracle_residual(&s, &v, 0, 77).unwrap();
        assert_eq!(a, oracle_residual(&s, &v, 0, 77).unwrap());
        assert_ne!(a, oracle_residual(&s, &v, 0, 78).unwrap());
        let (l, _) = masked_loss(&s, &v, 0, 77).unwrap();
        let direct: f64 = a.iter().map(|x| x * x).sum::<f64>() / 3.0;
        assert!((l - direct).abs() < 1e-12);
    }

    #[test]
    fn scalar_hand_example() {
        let mask = Mask::from_indices(2, 2, [0, 1, 2, 3]);
        let s = SyntheticScene::new(
            2,
            2,
            array![[1.0]],
            vec![mask],
            array![[2.0]],
            Array2::zeros((4, 1)),
            0.0,
            0,
        )
        .unwrap();
        let (l, g) = masked_loss(&s, &[1.5], 0, 0).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
        assert!((g[0] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_concept_rejected() {
        let s = scene(0.0, 1);
        assert!(oracle_residual(&s, &[0.0; 3], 2, 0).is_err());
    }

    #[test]
    fn cross_attention_properties() {
        let s = scene(0.0, 4);
        let uni = cross_attention(&s, &[0.0; 3]);
        assert!(uni.iter().all(|&x| (x - 1.0 / 12.0).abs() < 1e-15));
        let v = [0.4, -0.3, 0.9];
        let a = cross_attention(&s, &v);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12 && a.iter().all(|&x| x > 0.0));
        let mut scaled = s.clone();
        scaled.keys.mapv_inplace(|k| 3.0 * k);
        let b = cross_attention(&scaled, &v);
        let argmax = |x: &[f64]| (0..x.len()).max_by(|&i, &j| x[i].total_cmp(&x[j])).unwrap();
        assert_ne!(a, b);
        assert_eq!(argmax(&a), argmax(&b));
    }

    #[test]
    fn orthogonal_contrastive_value() {
        let t = SplitTable::new(2, 2, Array2::eye(4)).unwrap();
        let (l, _) = contrastive_loss(&t, 0.07).unwrap();
        let per_token = 3f64.ln() / 4.0;
        assert!((l - 4.0 * per_token).abs() < 1e-12);
    }

    #[test]
    fn identical_same_concept_tokens_lower_the_loss() {
        let orth = contrastive_loss(&SplitTable::new(2, 2, Array2::eye(4)).unwrap(), 0.07)
            .unwrap()
            .0;
        let tied = array![
            [1.0, 0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0, 0.0]
        ];
        let l = contrastive_loss(&SplitTable::new(2, 2, tied).unwrap(), 0.07)
            .unwrap()
            .0;
        assert!(l < orth);
    }

    #[test]
    fn contrastive_needs_two_tokens() {
        let t = SplitTable::random(3, 1, 4, 0).unwrap();
        assert!(matches!(
            contrastive_loss(&t, 0.07),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn alignment_zero_when_attention_matches() {
        let s = scene(0.0, 5);
        let v = [0.2, 0.5, -0.4];
        let target = cross_attention(&s, &v);
        let (l, _) = alignment_loss(&s, &v, &target, AlignVia::Exact).unwrap();
        assert!(l.abs() < 1e-12);
    }

    #[test]
    fn alignment_between_point_masses() {
        let (h, w) = (3, 4);
        let mut keys = Array2::zeros((h * w, 1));
        keys[[5, 0]] = 2000.0;
        let mask = Mask::from_indices(h, w, [0]);
        let s = SyntheticScene::new(h, w, array![[1.0]], vec![mask], array![[1.0]], keys, 0.0, 0)
            .unwrap();
        let mut target = vec![0.0; h * w];
        target[11] = 1.0;
        let (l, _) = alignment_loss(&s, &[1.0], &target, AlignVia::Exact).unwrap();
        // cell 5 = (1, 1), cell 11 = (2, 3), diagonal of a 3x4 grid is sqrt(4 + 9)
        let expected = 5f64.sqrt() / 13f64.sqrt();
        assert!((l - expected).abs() < 1e-12, "{l} vs {expected}");
    }

    #[test]
    fn small_eps_falls_back_to_dense() {
        let a = Aligner::new(
            3,
            4,
            AlignVia::Sinkhorn {
                eps: 0.01,
                max_iters: 10,
                tol: 1e-9,
            },
        )
        .unwrap();
        assert!(format!("{a:?}").contains("dense"));
        let b = Aligner::new(3, 4, AlignVia::default()).unwrap();
        assert!(format!("{b:?}").contains("grid"));
    }
}
