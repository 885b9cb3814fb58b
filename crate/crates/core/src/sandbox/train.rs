use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::losses::{
    alignment_loss_with, contrastive_loss, masked_loss, AlignVia, Aligner, WarmStart,
};
use super::scene::SyntheticScene;
use super::split::{merge_tokens, SplitTable};
use crate::error::{Error, Result};
use crate::tensorio::{save_tensor, Tensor};

/// Token-optimization schedule and loss weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the contrastive term in the split phase.
    pub alpha: f64,
    /// Weight of the attention alignment term.
    pub beta: f64,
    pub tau: f64,
    /// Tokens per concept during the split phase.
    pub g: usize,
    pub lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub seed: u64,
    pub align: AlignVia,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 1e-3,
            beta: 1e-5,
            tau: 0.07,
            g: 5,
            lr: 5e-4,
            warmup_steps: 100,
            total_steps: 500,
            seed: 0,
            align: AlignVia::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::arg("tau must be positive"));
        }
        if self.g == 0 {
            return Err(Error::arg("g must be at least 1"));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::arg(format!(
                "warmup_steps {} exceeds total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::arg("lr must be positive and finite"));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::arg("loss weights must be nonnegative"));
        }
        Ok(())
    }
}

/// Loss terms at one step, each averaged like the optimized objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// 1 for the split phase, 2 after merging.
    pub phase: u8,
    pub masked: f64,
    pub contrastive: f64,
    pub alignment: f64,
    pub total: f64,
}

/// Per-step losses plus embedding snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub steps: Vec<StepRecord>,
    /// Split-table initialization, `(N g) x dim`.
    pub initial: Array2<f64>,
    /// Merged embeddings at the warmup boundary.
    pub merged: Array2<f64>,
    pub final_embeddings: Array2<f64>,
}

#[derive(Serialize)]
struct TraceDoc<'a> {
    final_path: &'a str,
    initial_path: &'a str,
    merged_path: &'a str,
    steps: &'a [StepRecord],
}

impl TrainTrace {
    /// Writes `trace.json` and RAWT snapshots into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let arr = |a: &Array2<f64>| {
            Tensor::from_vec(
                vec![a.nrows(), a.ncols()],
                a.iter().copied().collect::<Vec<f64>>(),
            )
        };
        let (fp, ip, mp) = (
            "final_embeddings.rawt",
            "initial_embeddings.rawt",
            "merged_embeddings.rawt",
        );
        save_tensor(&arr(&self.final_embeddings)?, dir.join(fp))?;
        save_tensor(&arr(&self.initial)?, dir.join(ip))?;
        save_tensor(&arr(&self.merged)?, dir.join(mp))?;
        let doc = TraceDoc {
            final_path: fp,
            initial_path: ip,
            merged_path: mp,
            steps: &self.steps,
        };
        let path = dir.join("trace.json");
        fs::write(&path, serde_json::to_string_pretty(&doc)?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Cosine similarity between each learned embedding and its ground truth.
pub fn cosines(embeddings: &Array2<f64>, truth: &Array2<f64>) -> Vec<f64> {
    embeddings
        .outer_iter()
        .zip(truth.outer_iter())
        .map(|(a, b)| a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt()))
        .collect()
}

fn mix(parts: &[u64]) -> u64 {
    // SplitMix64 over the parts.
    let mut x = 0x243F_6A88_85A3_08D3u64;
    for &p in parts {
        x = x.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x = z ^ (z >> 31);
    }
    x
}

/// Masked value and gradient, then alignment value and gradient, for one token.
type TokenTerms = (f64, Vec<f64>, f64, Vec<f64>);

/// Per-token masked and alignment terms, in token order.
fn token_terms(
    scene: &SyntheticScene,
    tokens: &Array2<f64>,
    per_concept: usize,
    targets: &[Vec<f64>],
    aligner: Option<&Aligner>,
    warm: &mut [WarmStart],
    seeds: &[u64],
) -> Result<Vec<TokenTerms>> {
    warm.par_iter_mut()
        .enumerate()
        .map(|(a, ws)| {
            let i = a / per_concept;
            let v = tokens.row(a).to_vec();
            let (lm, gm) = masked_loss(scene, &v, i, seeds[a])?;
            let (lr, gr) = match aligner {
                Some(al) => alignment_loss_with(scene, &v, &targets[i], al, Some(ws))?,
                None => (0.0, vec![0.0; v.len()]),
            };
            Ok((lm, gm, lr, gr))
        })
        .collect()
}

fn check_finite(step: usize, total: f64, tokens: &Array2<f64>) -> Result<()> {
    if !total.is_finite() {
        return Err(Error::Divergence {
            step,
            detail: format!("loss is {total}"),
        });
    }
    if tokens.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            step,
            detail: "embedding became non-finite".into(),
        });
    }
    Ok(())
}

/// Split-and-merge token optimization against the scene's mask-uniform targets.
pub fn train(scene: &SyntheticScene, cfg: &TrainConfig) -> Result<(Array2<f64>, TrainTrace)> {
    train_with_targets(scene, &scene.mask_targets(), cfg)
}

/// Split-and-merge optimization with explicit per-concept attention targets.
///
/// Phase 1 runs gradient descent on the mean over all split tokens of
/// `L_ij + alpha L^con_ij + beta L^reg_ij`; tokens are then averaged per
/// concept and phase 2 descends on the mean over concepts of `L_i + beta L^reg_i`.
pub fn train_with_targets(
    scene: &SyntheticScene,
    targets: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<(Array2<f64>, TrainTrace)> {
    cfg.validate()?;
    let n = scene.n_concepts();
    if targets.len() != n || targets.iter().any(|t| t.len() != scene.h * scene.w) {
        return Err(Error::arg(
            "need one grid-sized attention target per concept",
        ));
    }
    let aligner = if cfg.beta > 0.0 {
        Some(Aligner::new(scene.h, scene.w, cfg.align)?)
    } else {
        None
    };
    let mut table =
        SplitTable::random(n, cfg.g, scene.dim(), mix(&[cfg.seed, scene.seed, 0xA11CE]))?;
    let initial = table.tokens().clone();
    let mut steps = Vec::with_capacity(cfg.total_steps);
    let mut warm: Vec<WarmStart> = vec![(Vec::new(), Vec::new()); n * cfg.g];

    for step in 0..cfg.warmup_steps {
        let count = (n * cfg.g) as f64;
        let seeds: Vec<u64> = (0..n * cfg.g)
            .map(|a| mix(&[cfg.seed, scene.seed, step as u64, (a % cfg.g) as u64]))
            .collect();
        let terms = token_terms(
            scene,
            table.tokens(),
            cfg.g,
            targets,
            aligner.as_ref(),
            &mut warm,
            &seeds,
        )?;
        let (con, con_grad) = if cfg.g >= 2 && cfg.alpha > 0.0 {
            contrastive_loss(&table, cfg.tau)?
        } else {
            (0.0, Array2::zeros(table.tokens().dim()))
        };
        let masked: f64 = terms.iter().map(|t| t.0).sum::<f64>() / count;
        let align: f64 = terms.iter().map(|t| t.2).sum::<f64>() / count;
        // con already carries the 1 / (g N) factor per token; the objective averages once more.
        let con_mean = con / count;
        let total = masked + cfg.alpha * con_mean + cfg.beta * align;
        check_finite(step, total, table.tokens())?;
        steps.push(StepRecord {
            step,
            phase: 1,
            masked,
            contrastive: con_mean,
            alignment: align,
            total,
        });
        let mut tokens = table.tokens().clone();
        for (a, (_, gm, _, gr)) in terms.iter().enumerate() {
            for k in 0..tokens.ncols() {
                let grad = (gm[k] + cfg.alpha * con_grad[[a, k]] + cfg.beta * gr[k]) / count;
                tokens[[a, k]] -= cfg.lr * grad;
            }
        }
        table = SplitTable::new(n, cfg.g, tokens)?;
    }

    let merged = merge_tokens(&table);
    let mut v = merged.clone();
    let mut warm: Vec<WarmStart> = (0..n).map(|i| warm[i * cfg.g].clone()).collect();
    for step in cfg.warmup_steps..cfg.total_steps {
        let count = n as f64;
        let seeds: Vec<u64> = (0..n)
            .map(|_| mix(&[cfg.seed, scene.seed, step as u64, 0]))
            .collect();
        let terms = token_terms(scene, &v, 1, targets, aligner.as_ref(), &mut warm, &seeds)?;
        let masked: f64 = terms.iter().map(|t| t.0).sum::<f64>() / count;
        let align: f64 = terms.iter().map(|t| t.2).sum::<f64>() / count;
        let total = masked + cfg.beta * align;
        check_finite(step, total, &v)?;
        steps.push(StepRecord {
            step,
            phase: 2,
            masked,
            contrastive: 0.0,
            alignment: align,
            total,
        });
        for (i, (_, gm, _, gr)) in terms.iter().enumerate() {
            for k in 0..v.ncols() {
                v[[i, k]] -= cfg.lr * (gm[k] + cfg.beta * gr[k]) / count;
            }
        }
    }
    check_finite(cfg.total_steps, 0.0, &v)?;
    let trace = TrainTrace {
        steps,
        initial,
        merged,
        final_embeddings: v.clone(),
    };
    Ok((v, trace))
}
