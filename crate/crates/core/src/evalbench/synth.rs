use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localize::SaliencyMap;
use crate::mask::{Connectivity, Mask};
use crate::sandbox::{SceneParams, SyntheticScene};
use crate::tensorio::{save_tensor, AttentionLayer, AttentionStack, Tensor};

/// A planted region on the grid (cell centers at integer coordinates).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Rect {
        top: usize,
        left: usize,
        height: usize,
        width: usize,
    },
    Ellipse {
        cy: f64,
        cx: f64,
        ry: f64,
        rx: f64,
    },
}

impl Shape {
    pub fn rasterize(&self, h: usize, w: usize) -> Mask {
        let mut m = Mask::empty(h, w);
        for y in 0..h {
            for x in 0..w {
                let inside = match *self {
                    Shape::Rect {
                        top,
                        left,
                        height,
                        width,
                    } => (top..top + height).contains(&y) && (left..left + width).contains(&x),
                    Shape::Ellipse { cy, cx, ry, rx } => {
                        let (dy, dx) = ((y as f64 - cy) / ry, (x as f64 - cx) / rx);
                        ry > 0.0 && rx > 0.0 && dy * dy + dx * dx <= 1.0
                    }
                };
                if inside {
                    m.set(y * w + x, true);
                }
            }
        }
        m
    }
}

fn default_eta() -> f64 {
    0.1
}

fn default_salient() -> f64 {
    1.0
}

fn default_background() -> f64 {
    0.1
}

/// Scene description for the synthetic benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub shapes: Vec<Shape>,
    /// Weight of the uniform component of every attention row.
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Scale of the random attention and saliency perturbation; 0 is noiseless.
    #[serde(default)]
    pub noise: f64,
    /// Saliency on shapes and on the background.
    #[serde(default = "default_salient")]
    pub salient: f64,
    #[serde(default = "default_background")]
    pub background: f64,
    /// Attention layer resolutions; empty means one layer at the full grid.
    #[serde(default)]
    pub layers: Vec<[usize; 2]>,
    #[serde(default)]
    pub scene: SceneParams,
}

impl SceneSpec {
    /// Ground-truth masks, one per shape, checked for overlap and emptiness.
    pub fn masks(&self) -> Result<Vec<Mask>> {
        if self.shapes.is_empty() {
            return Err(Error::arg("scene spec has no shapes"));
        }
        let masks: Vec<Mask> = self
            .shapes
            .iter()
            .map(|s| s.rasterize(self.height, self.width))
            .collect();
        for (i, m) in masks.iter().enumerate() {
            if m.is_empty() {
                return Err(Error::arg(format!("shape {i} covers no grid cell")));
            }
            for (j, other) in masks.iter().enumerate().skip(i + 1) {
                if m.overlaps(other)? {
                    return Err(Error::arg(format!("shapes {i} and {j} overlap")));
                }
            }
        }
        Ok(masks)
    }

    fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::arg("scene grid must be non-empty"));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::arg(format!(
                "eta must lie in [0, 1], got {}",
                self.eta
            )));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::arg(format!(
                "noise must lie in [0, 1), got {}",
                self.noise
            )));
        }
        if !(self.salient > self.background && self.background >= 0.0) {
            return Err(Error::arg(
                "salient level must exceed a nonnegative background level",
            ));
        }
        if self
            .layers
            .iter()
            .any(|&[lh, lw]| lh == 0 || lw == 0 || lh > self.height || lw > self.width)
        {
            return Err(Error::arg(
                "layer resolutions must be positive and no finer than the grid",
            ));
        }
        Ok(())
    }
}

/// Everything generated for one synthetic scene.
#[derive(Debug, Clone)]
pub struct SceneBundle {
    pub stack: AttentionStack,
    pub saliency: SaliencyMap,
    pub ground_truth: Vec<Mask>,
    pub scene: SyntheticScene,
}

fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Region id per cell: shape index, or `shapes.len()` for the background.
fn regions(masks: &[Mask], h: usize, w: usize) -> Vec<usize> {
    let mut r = vec![masks.len(); h * w];
    for (i, m) in masks.iter().enumerate() {
        for p in m.indices() {
            r[p] = i;
        }
    }
    r
}

/// One attention layer: row `p` is `(1 - eta) 1[R(p)] / |R(p)| + eta / n + noise * xi / n`, normalized.
fn attention_layer(region: &[usize], eta: f64, noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = region.len();
    let groups = region.iter().max().map_or(0, |m| m + 1);
    let mut size = vec![0usize; groups];
    for &r in region {
        size[r] += 1;
    }
    let mut data = vec![0.0; n * n];
    for (p, row) in data.chunks_exact_mut(n).enumerate() {
        let own = region[p];
        for (q, v) in row.iter_mut().enumerate() {
            let ind = if region[q] == own {
                (1.0 - eta) / size[own] as f64
            } else {
                0.0
            };
            let xi = if noise > 0.0 {
                noise * rng.random::<f64>() / n as f64
            } else {
                0.0
            };
            *v = ind + eta / n as f64 + xi;
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    data
}

/// Builds attention, saliency, ground truth and the sandbox scene for `spec`.
///
/// Attention rows concentrate on the cell's own region (a shape, or the
/// background) with a uniform floor of weight `eta`; saliency is
/// `salient` on shapes and `background` elsewhere. With `noise = 0` the
/// attention is constant within each region.
pub fn synthesize_scene(spec: &SceneSpec, seed: u64) -> Result<SceneBundle> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let truth = spec.masks()?;
    let fine = regions(&truth, h, w);
    let resolutions = if spec.layers.is_empty() {
        vec![[h, w]]
    } else {
        spec.layers.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 1));
    let layers = resolutions
        .iter()
        .map(|&[lh, lw]| {
            // Nearest-cell sampling of the region map at the layer resolution.
            let region: Vec<usize> = (0..lh * lw)
                .map(|c| fine[((c / lw) * h / lh) * w + (c % lw) * w / lw])
                .collect();
            AttentionLayer::new(
                lh,
                lw,
                attention_layer(&region, spec.eta, spec.noise, &mut rng),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut srng = ChaCha8Rng::seed_from_u64(mix(seed, 2));
    let e = fine
        .iter()
        .map(|&r| {
            let base = if r < truth.len() {
                spec.salient
            } else {
                spec.background
            };
            let jitter = if spec.noise > 0.0 {
                spec.noise * (srng.random::<f64>() - 0.5)
            } else {
                0.0
            };
            base * (1.0 + jitter)
        })
        .collect();
    let saliency = SaliencyMap::new(h, w, e)?;
    let scene = SyntheticScene::generate(h, w, truth.clone(), &spec.scene, mix(seed, 3))?;
    Ok(SceneBundle {
        stack: AttentionStack::new(layers),
        saliency,
        ground_truth: truth,
        scene,
    })
}

/// Random spec with `k` non-touching shapes (gap of at least one cell).
pub fn random_spec(h: usize, w: usize, k: usize, seed: u64) -> Result<SceneSpec> {
    if k == 0 {
        return Err(Error::arg("need at least one shape"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = ((h.min(w) / 8).max(2), (h.min(w) / 4).max(3));
    let mut shapes = Vec::with_capacity(k);
    let mut placed: Vec<Mask> = Vec::new();
    let mut attempts = 0;
    while shapes.len() < k {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::arg(format!(
                "could not place {k} shapes on a {h}x{w} grid"
            )));
        }
        let (sh, sw) = (rng.random_range(lo..=hi), rng.random_range(lo..=hi));
        if sh >= h || sw >= w {
            continue;
        }
        let (top, left) = (rng.random_range(0..=h - sh), rng.random_range(0..=w - sw));
        let shape = if rng.random_bool(0.5) {
            Shape::Rect {
                top,
                left,
                height: sh,
                width: sw,
            }
        } else {
            Shape::Ellipse {
                cy: top as f64 + (sh as f64 - 1.0) / 2.0,
                cx: left as f64 + (sw as f64 - 1.0) / 2.0,
                ry: sh as f64 / 2.0,
                rx: sw as f64 / 2.0,
            }
        };
        let m = shape.rasterize(h, w);
        if m.is_empty() {
            continue;
        }
        let clear = placed
            .iter()
            .all(|o| !m.touches(o, Connectivity::Eight).expect("same grid"));
        if clear {
            placed.push(m);
            shapes.push(shape);
        }
    }
    Ok(SceneSpec {
        height: h,
        width: w,
        shapes,
        eta: default_eta(),
        noise: 0.0,
        salient: default_salient(),
        background: default_background(),
        layers: Vec::new(),
        scene: SceneParams::default(),
    })
}

impl SceneBundle {
    /// Writes `attention.json` with layers, `saliency.rawt`, `gt/mask_k.rawt`
    /// and `scene.json`; returns the attention manifest path.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let manifest = self.stack.save_manifest(dir, "attention.json")?;
        let (h, w) = self.saliency.side();
        save_tensor(
            &Tensor::from_vec(vec![h, w], self.saliency.values().to_vec())?,
            dir.join("saliency.rawt"),
        )?;
        let gt = dir.join("gt");
        fs::create_dir_all(&gt).map_err(|e| Error::io(&gt, e))?;
        for (k, m) in self.ground_truth.iter().enumerate() {
            save_tensor(
                &Tensor::from_vec(vec![h, w], m.to_bytes())?,
                gt.join(format!("mask_{k}.rawt")),
            )?;
        }
        self.scene.save(dir, "scene")?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalbench::match_concepts;
    use crate::localize::{localize, LocalizeConfig};
    use crate::tensorio::aggregate_attention;

    fn three_shapes() -> SceneSpec {
        SceneSpec {
            height: 16,
            width: 16,
            shapes: vec![
                Shape::Rect {
                    top: 1,
                    left: 1,
                    height: 4,
                    width: 5,
                },
                Shape::Ellipse {
                    cy: 10.0,
                    cx: 4.0,
                    ry: 3.0,
                    rx: 2.5,
                },
                Shape::Rect {
                    top: 8,
                    left: 10,
                    height: 5,
                    width: 4,
                },
            ],
            ..random_spec(16, 16, 1, 0).unwrap()
        }
    }

    #[test]
    fn noiseless_scene_localizes_exactly() {
        let spec = three_shapes();
        let b = synthesize_scene(&spec, 4).unwrap();
        let a = aggregate_attention(&b.stack, (16, 16)).unwrap();
        let t = localize(&a, &b.saliency, &LocalizeConfig::default()).unwrap();
        assert_eq!(t.len(), 3);
        let r = match_concepts(&t.masks(), &b.ground_truth).unwrap();
        assert_eq!(r.avg_iou, 1.0);
    }

    #[test]
    fn single_full_grid_shape() {
        let spec = SceneSpec {
            shapes: vec![Shape::Rect {
                top: 0,
                left: 0,
                height: 8,
                width: 8,
            }],
            ..random_spec(8, 8, 1, 0).unwrap()
        };
        let b = synthesize_scene(&spec, 0).unwrap();
        let a = aggregate_attention(&b.stack, (8, 8)).unwrap();
        let t = localize(&a, &b.saliency, &LocalizeConfig::default()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.concepts[0].mask, Mask::full(8, 8));
    }

    #[test]
    fn seed_changes_noise_not_truth() {
        let spec = SceneSpec {
            noise: 0.2,
            ..three_shapes()
        };
        let a = synthesize_scene(&spec, 1).unwrap();
        let b = synthesize_scene(&spec, 2).unwrap();
        let again = synthesize_scene(&spec, 1).unwrap();
        assert_eq!(a.ground_truth, b.ground_truth);
        assert_ne!(a.stack, b.stack);
        assert_eq!(a.stack, again.stack);
        assert_eq!(a.saliency, again.saliency);
    }

    #[test]
    fn overlap_rejected() {
        let spec = SceneSpec {
            shapes: vec![
                Shape::Rect {
                    top: 0,
                    left: 0,
                    height: 3,
                    width: 3,
                },
                Shape::Rect {
                    top: 2,
                    left: 2,
                    height: 3,
                    width: 3,
                },
            ],
            ..three_shapes()
        };
        assert!(matches!(
            synthesize_scene(&spec, 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn random_specs_do_not_touch() {
        for seed in 0..5 {
            let spec = random_spec(64, 64, 5, seed).unwrap();
            let masks = spec.masks().unwrap();
            assert_eq!(masks.len(), 5);
            for (i, a) in masks.iter().enumerate() {
                for b in &masks[i + 1..] {
                    assert!(!a.touches(b, Connectivity::Eight).unwrap());
                }
            }
        }
    }
}
