use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensorio::{load_tensor, save_tensor, Tensor, TensorData};

/// Parameters for generating the synthetic denoiser of a scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub channels: usize,
    pub embed_dim: usize,
    /// Scale of the per-step residual noise.
    pub sigma: f64,
    /// Length of the concept direction in the keys of its cells.
    pub key_scale: f64,
    /// Scale of isotropic noise added to every key.
    pub key_noise: f64,
    /// Range of the singular values of the projection.
    pub min_singular: f64,
    pub max_singular: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            channels: 16,
            embed_dim: 8,
            sigma: 0.1,
            key_scale: 16.0,
            key_noise: 0.1,
            min_singular: 8.0,
            max_singular: 10.0,
        }
    }
}

/// Analytic stand-in for a denoiser conditioned on concept tokens.
///
/// The residual for concept `i` at embedding `v` is `phi (v - u_i)` plus noise
/// on the cells of `m_i`; cross-attention is a softmax of `keys v / sqrt(dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub h: usize,
    pub w: usize,
    /// Ground-truth unit embeddings, `N x dim`.
    pub u: Array2<f64>,
    pub masks: Vec<Mask>,
    /// Projection `C x dim` of full column rank.
    pub phi: Array2<f64>,
    /// One key per grid cell, `(h*w) x dim`.
    pub keys: Array2<f64>,
    pub sigma: f64,
    pub seed: u64,
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `k` orthonormal columns in `R^n`, from Gram-Schmidt on Gaussian vectors.
fn orthonormal(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((n, k));
    let mut col = 0;
    while col < k {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for c in 0..col {
                let proj: f64 = (0..n).map(|r| q[[r, c]] * v[r]).sum();
                for r in 0..n {
                    v[r] -= proj * q[[r, c]];
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            for r in 0..n {
                q[[r, col]] = v[r] / norm;
            }
            col += 1;
        }
    }
    q
}

/// True when `a^T a` is numerically positive definite.
fn full_column_rank(a: &Array2<f64>) -> bool {
    let g = a.t().dot(a);
    let k = g.nrows();
    let scale = (0..k).map(|i| g[[i, i]]).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return false;
    }
    let mut l = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        for j in 0..=i {
            let s: f64 = (0..j).map(|t| l[[i, t]] * l[[j, t]]).sum();
            if i == j {
                let d = g[[i, i]] - s;
                if d <= 1e-12 * scale {
                    return false;
                }
                l[[i, i]] = d.sqrt();
            } else {
                l[[i, j]] = (g[[i, j]] - s) / l[[j, j]];
            }
        }
    }
    true
}

impl SyntheticScene {
    /// Validates shapes, unit norms, disjoint non-empty masks and the rank of `phi`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        h: usize,
        w: usize,
        u: Array2<f64>,
        masks: Vec<Mask>,
        phi: Array2<f64>,
        keys: Array2<f64>,
        sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        let (n, dim) = u.dim();
        if n == 0 || dim == 0 {
            return Err(Error::arg(
                "scene needs at least one concept and a positive embedding size",
            ));
        }
        if masks.len() != n {
            return Err(Error::arg(format!(
                "{} masks for {n} concepts",
                masks.len()
            )));
        }
        let (c, pd) = phi.dim();
        if pd != dim || c < dim {
            return Err(Error::arg(format!(
                "projection is {c}x{pd}, needs C >= dim = {dim}"
            )));
        }
        if !full_column_rank(&phi) {
            return Err(Error::Domain("projection is rank deficient".into()));
        }
        if keys.dim() != (h * w, dim) {
            return Err(Error::arg(format!(
                "keys must be {}x{dim}, got {:?}",
                h * w,
                keys.dim()
            )));
        }
        for (i, row) in u.outer_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!(
                    "ground-truth embedding {i} has norm {norm}"
                )));
            }
        }
        for (i, m) in masks.iter().enumerate() {
            if (m.height(), m.width()) != (h, w) || m.is_empty() {
                return Err(Error::arg(format!("mask {i} is empty or not {h}x{w}")));
            }
            for other in &masks[i + 1..] {
                if m.overlaps(other)? {
                    return Err(Error::arg("scene masks overlap"));
                }
            }
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::arg(format!(
                "noise scale must be nonnegative, got {sigma}"
            )));
        }
        if phi.iter().chain(keys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite projection or key".into()));
        }
        Ok(SyntheticScene {
            h,
            w,
            u,
            masks,
            phi,
            keys,
            sigma,
            seed,
        })
    }

    /// Draws ground truth, projection and keys for the given masks.
    pub fn generate(
        h: usize,
        w: usize,
        masks: Vec<Mask>,
        params: &SceneParams,
        seed: u64,
    ) -> Result<Self> {
        let (c, dim) = (params.channels, params.embed_dim);
        if dim == 0 || c < dim {
            return Err(Error::arg(format!(
                "need channels >= embed_dim > 0, got {c} and {dim}"
            )));
        }
        if !(params.min_singular > 0.0 && params.max_singular >= params.min_singular) {
            return Err(Error::arg(
                "singular value range must be positive and ordered",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = masks.len();
        let mut u = Array2::<f64>::zeros((n, dim));
        for i in 0..n {
            u.row_mut(i)
                .assign(&ArrayView1::from(&random_unit(&mut rng, dim)));
        }
        let left = orthonormal(&mut rng, c, dim);
        let right = orthonormal(&mut rng, dim, dim);
        let s: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(params.min_singular..=params.max_singular))
            .collect();
        let phi = Array2::from_shape_fn((c, dim), |(r, k)| {
            (0..dim).map(|t| left[[r, t]] * s[t] * right[[k, t]]).sum()
        });
        let mut owner = vec![None; h * w];
        for (i, m) in masks.iter().enumerate() {
            for p in m.indices() {
                owner[p] = Some(i);
            }
        }
        let mut keys = Array2::<f64>::zeros((h * w, dim));
        for p in 0..h * w {
            for k in 0..dim {
                let base = owner[p].map_or(0.0, |i| params.key_scale * u[[i, k]]);
                let noise: f64 = rng.sample(StandardNormal);
                keys[[p, k]] = base + params.key_noise * noise;
            }
        }
        SyntheticScene::new(h, w, u, masks, phi, keys, params.sigma, seed)
    }

    pub fn n_concepts(&self) -> usize {
        self.u.nrows()
    }

    pub fn dim(&self) -> usize {
        self.u.ncols()
    }

    pub fn channels(&self) -> usize {
        self.phi.nrows()
    }

    /// Uniform distribution over each concept's mask.
    pub fn mask_targets(&self) -> Vec<Vec<f64>> {
        self.masks
            .iter()
            .map(|m| {
                let k = m.count() as f64;
                m.bits()
                    .iter()
                    .map(|&b| if b { 1.0 / k } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    /// Writes `<name>.json` with RAWT sidecars for every array.
    pub fn save(&self, dir: impl AsRef<Path>, name: &str) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = SceneFiles {
            keys: format!("{name}_keys.rawt"),
            masks: format!("{name}_masks.rawt"),
            phi: format!("{name}_phi.rawt"),
            u: format!("{name}_u.rawt"),
        };
        let arr = |a: &Array2<f64>| {
            Tensor::from_vec(
                vec![a.nrows(), a.ncols()],
                a.iter().copied().collect::<Vec<f64>>(),
            )
        };
        save_tensor(&arr(&self.keys)?, dir.join(&files.keys))?;
        save_tensor(&arr(&self.phi)?, dir.join(&files.phi))?;
        save_tensor(&arr(&self.u)?, dir.join(&files.u))?;
        let bytes: Vec<u8> = self.masks.iter().flat_map(|m| m.to_bytes()).collect();
        save_tensor(
            &Tensor::from_vec(vec![self.masks.len(), self.h, self.w], bytes)?,
            dir.join(&files.masks),
        )?;
        let doc = SceneDoc {
            files,
            height: self.h,
            seed: self.seed,
            sigma: self.sigma,
            width: self.w,
        };
        let path = dir.join(format!("{name}.json"));
        fs::write(&path, serde_json::to_string_pretty(&doc)?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: SceneDoc = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let arr = |file: &str| -> Result<Array2<f64>> {
            let t = load_tensor(base.join(file))?;
            match t.shape() {
                [r, c] => Ok(Array2::from_shape_vec((*r, *c), t.to_f64_vec()).expect("shape")),
                s => Err(Error::Format(format!(
                    "{file}: expected a matrix, got shape {s:?}"
                ))),
            }
        };
        let mt = load_tensor(base.join(&doc.files.masks))?;
        let (h, w) = (doc.height, doc.width);
        let masks = match (mt.shape(), mt.data()) {
            ([n, mh, mw], TensorData::U8(bytes)) if (*mh, *mw) == (h, w) => (0..*n)
                .map(|i| {
                    Mask::from_bits(
                        h,
                        w,
                        bytes[i * h * w..(i + 1) * h * w]
                            .iter()
                            .map(|&b| b != 0)
                            .collect(),
                    )
                })
                .collect::<Result<Vec<_>>>()?,
            _ => {
                return Err(Error::Format(format!(
                    "{}: expected N x {h} x {w} uint8 masks",
                    doc.files.masks
                )))
            }
        };
        SyntheticScene::new(
            h,
            w,
            arr(&doc.files.u)?,
            masks,
            arr(&doc.files.phi)?,
            arr(&doc.files.keys)?,
            doc.sigma,
            doc.seed,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct SceneFiles {
    keys: String,
    masks: String,
    phi: String,
    u: String,
}

#[derive(Serialize, Deserialize)]
struct SceneDoc {
    files: SceneFiles,
    height: usize,
    seed: u64,
    sigma: f64,
    width: usize,
}
