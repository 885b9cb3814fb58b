//! Self-attention stacks and their aggregation onto a common grid.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rawt::{load_tensor, save_tensor, Tensor};
use super::resize::bilinear_resize;
use crate::error::{Error, Result};

/// One layer's self-attention, shape `(h, w, h, w)`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayer {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl AttentionLayer {
    pub fn new(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::arg("attention layer resolution must be positive"));
        }
        let n = h * w;
        if data.len() != n * n {
            return Err(Error::arg(format!(
                "attention layer {h}x{w} needs {} values, got {}",
                n * n,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!(
                "attention value {bad} is negative or non-finite"
            )));
        }
        Ok(AttentionLayer { h, w, data })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [a, b, c, d] if a == c && b == d => AttentionLayer::new(a, b, t.to_f64_vec()),
            ref s => Err(Error::Format(format!(
                "attention layer must have shape (h, w, h, w), got {s:?}"
            ))),
        }
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// The `h x w` map attended from query location `q` (row-major index).
    pub fn map(&self, q: usize) -> ArrayView2<'_, f64> {
        let n = self.h * self.w;
        ArrayView2::from_shape((self.h, self.w), &self.data[q * n..(q + 1) * n])
            .expect("layer shape")
    }

    pub fn to_tensor_f32(&self) -> Tensor {
        let data: Vec<f32> = self.data.iter().map(|&v| v as f32).collect();
        Tensor::from_vec(vec![self.h, self.w, self.h, self.w], data).expect("layer shape")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttentionStack {
    pub layers: Vec<AttentionLayer>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    h: usize,
    w: usize,
    path: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    layers: Vec<ManifestEntry>,
}

impl AttentionStack {
    pub fn new(layers: Vec<AttentionLayer>) -> Self {
        AttentionStack { layers }
    }

    /// Reads `{"layers": [{"h", "w", "path"}]}`; paths are relative to the manifest.
    pub fn load_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut layers = Vec::with_capacity(manifest.layers.len());
        for entry in manifest.layers {
            let layer_path: PathBuf = base.join(&entry.path);
            let layer = AttentionLayer::from_tensor(&load_tensor(&layer_path)?)?;
            if layer.resolution() != (entry.h, entry.w) {
                return Err(Error::Format(format!(
                    "{} has resolution {:?}, manifest says {}x{}",
                    layer_path.display(),
                    layer.resolution(),
                    entry.h,
                    entry.w
                )));
            }
            layers.push(layer);
        }
        Ok(AttentionStack { layers })
    }

    /// Writes each layer as float32 RAWT next to the manifest.
    pub fn save_manifest(&self, dir: impl AsRef<Path>, name: &str) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let mut entries = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let file = format!("layer_{k}.rawt");
            save_tensor(&layer.to_tensor_f32(), dir.join(&file))?;
            let (h, w) = layer.resolution();
            entries.push(ManifestEntry { h, w, path: file });
        }
        let path = dir.join(name);
        let text = serde_json::to_string_pretty(&Manifest { layers: entries })?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Row-stochastic `(h*w) x (h*w)` attention on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedAttention {
    h: usize,
    w: usize,
    rows: Array2<f64>,
}

impl AggregatedAttention {
    /// Validates nonnegativity and unit row sums (tolerance 1e-6).
    pub fn new(h: usize, w: usize, rows: Array2<f64>) -> Result<Self> {
        let n = h * w;
        if n == 0 || rows.dim() != (n, n) {
            return Err(Error::arg(format!(
                "aggregated attention for {h}x{w} must be {n}x{n}, got {:?}",
                rows.dim()
            )));
        }
        for (i, row) in rows.outer_iter().enumerate() {
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Domain(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            let s: f64 = row.sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::Domain(format!("row {i} sums to {s}")));
            }
        }
        Ok(AggregatedAttention { h, w, rows })
    }

    /// Normalizes every row of a nonnegative matrix.
    pub fn from_unnormalized(h: usize, w: usize, mut rows: Array2<f64>) -> Result<Self> {
        for (i, mut row) in rows.outer_iter_mut().enumerate() {
            let s: f64 = row.sum();
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Domain(format!("row {i} has no mass")));
            }
            row.mapv_inplace(|v| v / s);
        }
        AggregatedAttention::new(h, w, rows)
    }

    pub fn side(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn n(&self) -> usize {
        self.h * self.w
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn row(&self, p: usize) -> &[f64] {
        let n = self.n();
        &self.rows.as_slice().expect("standard layout")[p * n..(p + 1) * n]
    }

    pub fn to_tensor(&self) -> Tensor {
        let n = self.n();
        Tensor::from_vec(vec![n, n], self.rows.iter().copied().collect::<Vec<f64>>())
            .expect("shape")
    }

    pub fn from_tensor(t: &Tensor, side: (usize, usize)) -> Result<Self> {
        let n = side.0 * side.1;
        if t.shape() != [n, n] {
            return Err(Error::Format(format!(
                "expected a {n}x{n} attention matrix for side {side:?}, got {:?}",
                t.shape()
            )));
        }
        let rows = Array2::from_shape_vec((n, n), t.to_f64_vec()).expect("shape");
        AggregatedAttention::new(side.0, side.1, rows)
    }
}

/// Resizes every map of every layer to `side`, replicates query locations by
/// nearest index, averages layers and renormalizes rows.
pub fn aggregate_attention(
    stack: &AttentionStack,
    side: (usize, usize),
) -> Result<AggregatedAttention> {
    if stack.layers.is_empty() {
        return Err(Error::arg("attention stack is empty"));
    }
    let (h, w) = side;
    if h == 0 || w == 0 {
        return Err(Error::arg("aggregation grid must be positive"));
    }
    let n = h * w;
    // Per layer: resized map for each source query, flattened.
    let resized: Vec<Vec<f64>> = stack
        .layers
        .iter()
        .map(|layer| {
            let (hl, wl) = layer.resolution();
            if (hl, wl) == (h, w) {
                return Ok(layer.data().to_vec());
            }
            let mut out = Vec::with_capacity(hl * wl * n);
            for q in 0..hl * wl {
                out.extend(bilinear_resize(layer.map(q), side)?.iter());
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let layers = stack.layers.len() as f64;
    let mut rows = Array2::<f64>::zeros((n, n));
    rows.as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(p, row)| {
            let (y, x) = (p / w, p % w);
            for (layer, maps) in stack.layers.iter().zip(&resized) {
                let (hl, wl) = layer.resolution();
                let src = (y * hl / h) * wl + x * wl / w;
                for (acc, v) in row.iter_mut().zip(&maps[src * n..(src + 1) * n]) {
                    *acc += v;
                }
            }
            row.iter_mut().for_each(|v| *v /= layers);
        });
    AggregatedAttention::from_unnormalized(h, w, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_layer(h: usize, w: usize) -> AttentionLayer {
        let n = h * w;
        AttentionLayer::new(h, w, vec![1.0 / n as f64; n * n]).unwrap()
    }

    fn random_layer(h: usize, w: usize, seed: u64) -> AttentionLayer {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = h * w;
        let mut data: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
        for row in data.chunks_mut(n) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        AttentionLayer::new(h, w, data).unwrap()
    }

    #[test]
    fn single_layer_at_target_is_unchanged() {
        let layer = random_layer(3, 4, 1);
        let agg = aggregate_attention(&AttentionStack::new(vec![layer.clone()]), (3, 4)).unwrap();
        for (a, b) in agg.rows().iter().zip(layer.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn duplicate_layers_match_single() {
        let layer = random_layer(2, 2, 7);
        let one = aggregate_attention(&AttentionStack::new(vec![layer.clone()]), (4, 4)).unwrap();
        let two =
            aggregate_attention(&AttentionStack::new(vec![layer.clone(), layer]), (4, 4)).unwrap();
        for (a, b) in one.rows().iter().zip(two.rows().iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_layers_give_uniform_rows() {
        let stack = AttentionStack::new(vec![uniform_layer(2, 2), uniform_layer(4, 4)]);
        let agg = aggregate_attention(&stack, (4, 4)).unwrap();
        assert!(agg.rows().iter().all(|&v| (v - 1.0 / 16.0).abs() < 1e-15));
    }

    #[test]
    fn coarse_queries_are_replicated() {
        let layer = random_layer(2, 2, 3);
        let agg = aggregate_attention(&AttentionStack::new(vec![layer]), (4, 4)).unwrap();
        // (0,0), (0,1), (1,0), (1,1) all map back to coarse query 0
        for p in [1, 4, 5] {
            assert_eq!(agg.row(p), agg.row(0));
        }
        assert_ne!(agg.row(2), agg.row(0));
    }

    #[test]
    fn empty_stack_is_rejected() {
        assert!(aggregate_attention(&AttentionStack::default(), (2, 2)).is_err());
    }

    #[test]
    fn layer_shape_is_validated() {
        let t = Tensor::from_vec(vec![2, 2, 2, 3], vec![0.0f32; 24]).unwrap();
        assert!(matches!(
            AttentionLayer::from_tensor(&t),
            Err(Error::Format(_))
        ));
        assert!(AttentionLayer::new(1, 1, vec![-1.0]).is_err());
    }
}
