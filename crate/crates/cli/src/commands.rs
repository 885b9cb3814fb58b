//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use conceptkit::evalbench::{
    classify_topk, match_concepts, synthesize_scene, FeatureBank, SceneSpec, Similarity,
};
use conceptkit::localize::{localize as run_localize, LocalizeConfig, SaliencyMap};
use conceptkit::sandbox::{cosines, train, SyntheticScene, TrainConfig};
use conceptkit::tensorio::{
    aggregate_attention, load_tensor, save_tensor, AggregatedAttention, AttentionStack, Tensor,
    TensorData,
};
use conceptkit::transport::{
    emd as exact_emd, hungarian, location_cost, sinkhorn, SinkhornOptions,
};
use conceptkit::{Error, Mask, Result};
use ndarray::Array2;
use serde::Serialize;
use serde_json::json;

use crate::output::{io_error, mask_pgm, overlay_pgm, report_json, write_report};
use crate::{
    AggregateArgs, AssignArgs, BenchArgs, ClassifyArgs, EmdArgs, FixturesArgs, LocalizeArgs,
    Metric, Solver, TrainArgs,
};

pub fn parse_side(s: &str) -> std::result::Result<(usize, usize), String> {
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|e| format!("bad grid size {t:?}: {e}"))
    };
    let (h, w) = match s.split_once(['x', 'X']) {
        Some((a, b)) => (parse(a)?, parse(b)?),
        None => {
            let n = parse(s)?;
            (n, n)
        }
    };
    if h == 0 || w == 0 {
        return Err("grid sides must be positive".into());
    }
    Ok((h, w))
}

/// Fails early, naming the first path that does not exist.
fn require(paths: &[&Path]) -> Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(io_error(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
            ));
        }
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn emit<T: Serialize>(value: &T, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(p) => write_report(p, value),
        None => {
            print!("{}", report_json(value)?);
            Ok(())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn load_map(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let t = load_tensor(path)?;
    match *t.shape() {
        [h, w] => Ok((h, w, t.to_f64_vec())),
        ref s => Err(Error::Format(format!(
            "{}: expected a 2-D map, got shape {s:?}",
            path.display()
        ))),
    }
}

pub fn aggregate(a: &AggregateArgs) -> Result<()> {
    require(&[&a.manifest])?;
    let stack = AttentionStack::load_manifest(&a.manifest)?;
    let agg = aggregate_attention(&stack, a.side)?;
    save_tensor(&agg.to_tensor(), &a.out)?;
    let (h, w) = a.side;
    println!(
        "grid: {h}x{w} ({} cells), layers: {}",
        h * w,
        stack.layers.len()
    );
    if a.verify {
        let back = AggregatedAttention::from_tensor(&load_tensor(&a.out)?, a.side)?;
        let worst = back
            .rows()
            .outer_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max);
        println!("verified: max |row sum - 1| = {worst:.3e}");
    }
    Ok(())
}

fn load_attention(path: &Path, side: (usize, usize)) -> Result<AggregatedAttention> {
    if path.extension().is_some_and(|e| e == "json") {
        aggregate_attention(&AttentionStack::load_manifest(path)?, side)
    } else {
        AggregatedAttention::from_tensor(&load_tensor(path)?, side)
    }
}

pub fn localize(a: &LocalizeArgs) -> Result<()> {
    require(&[&a.attention, &a.saliency])?;
    if let Some(c) = &a.config {
        require(&[c])?;
    }
    let cfg: LocalizeConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => LocalizeConfig::default(),
    };
    let (h, w, e) = load_map(&a.saliency)?;
    let saliency = SaliencyMap::new(h, w, e)?;
    let attention = load_attention(&a.attention, (h, w))?;
    let table = run_localize(&attention, &saliency, &cfg)?;
    create_dir(&a.out)?;
    table.save(&a.out)?;
    for c in &table.concepts {
        let p = a.out.join(format!("mask_{}.pgm", c.token_id));
        fs::write(&p, mask_pgm(&c.mask)).map_err(|e| io_error(&p, e))?;
    }
    let p = a.out.join("overlay.pgm");
    fs::write(&p, overlay_pgm(h, w, &table.masks())).map_err(|e| io_error(&p, e))?;
    println!("concepts: {}", table.len());
    Ok(())
}

pub fn emd(a: &EmdArgs) -> Result<()> {
    require(&[&a.supply, &a.demand])?;
    let (h, w, p) = load_map(&a.supply)?;
    let (hq, wq, q) = load_map(&a.demand)?;
    if (h, w) != (hq, wq) {
        return Err(Error::Argument(format!(
            "supply is {h}x{w}, demand is {hq}x{wq}"
        )));
    }
    let c = location_cost(h, w, !a.raw_cost)?;
    let (plan, solver) = match a.solver {
        Solver::Exact => (exact_emd(&p, &q, c.view())?, "exact"),
        Solver::Sinkhorn => {
            let opts = SinkhornOptions {
                eps: a.eps,
                max_iters: a.max_iters,
                tol: a.tol,
            };
            (sinkhorn(&p, &q, c.view(), opts)?, "sinkhorn")
        }
    };
    if let Some(path) = &a.plan {
        let n = plan.flow.nrows();
        save_tensor(
            &Tensor::from_vec(vec![n, n], plan.flow.iter().copied().collect::<Vec<f64>>())?,
            path,
        )?;
    }
    let report = json!({
        "converged": plan.converged,
        "iterations": plan.iterations,
        "marginal_error": plan.marginal_error,
        "objective": plan.objective,
        "regularized": plan.regularized,
        "solver": solver,
    });
    emit(&report, a.out.as_ref())
}

pub fn assign(a: &AssignArgs) -> Result<()> {
    require(&[&a.cost])?;
    let t = load_tensor(&a.cost)?;
    let [n, m] = *t.shape() else {
        return Err(Error::Format(format!(
            "cost must be a matrix, got shape {:?}",
            t.shape()
        )));
    };
    let report = match t.data() {
        TensorData::U8(bytes) => {
            let cost = Array2::from_shape_fn((n, m), |(i, j)| i64::from(bytes[i * m + j]));
            let r = hungarian(cost.view(), a.maximize)?;
            json!({ "pairs": r.pairs, "total": r.total })
        }
        _ => {
            let cost = Array2::from_shape_vec((n, m), t.to_f64_vec()).expect("shape");
            let r = hungarian(cost.view(), a.maximize)?;
            json!({ "pairs": r.pairs, "total": r.total })
        }
    };
    emit(&report, a.out.as_ref())
}

/// Masks `mask_<k>.rawt` in a directory, ordered by `k`.
fn load_mask_dir(dir: &Path) -> Result<Vec<Mask>> {
    let entries = fs::read_dir(dir).map_err(|e| io_error(dir, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_error(dir, e))?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if let Some(k) = name
            .strip_prefix("mask_")
            .and_then(|s| s.strip_suffix(".rawt"))
            .and_then(|s| s.parse::<usize>().ok())
        {
            found.push((k, path));
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::Argument(format!(
            "{} holds no mask_<k>.rawt files",
            dir.display()
        )));
    }
    found
        .iter()
        .map(|(_, path)| {
            let t = load_tensor(path)?;
            match (t.shape(), t.data()) {
                (&[h, w], TensorData::U8(b)) => {
                    Mask::from_bits(h, w, b.iter().map(|&v| v != 0).collect())
                }
                _ => Err(Error::Format(format!(
                    "{} is not a 2-D uint8 mask",
                    path.display()
                ))),
            }
        })
        .collect()
}

fn percent(x: f64) -> f64 {
    (x * 1000.0).round() / 10.0
}

pub fn bench(a: &BenchArgs) -> Result<()> {
    require(&[&a.pred, &a.gt])?;
    let pred = load_mask_dir(&a.pred)?;
    let gt = load_mask_dir(&a.gt)?;
    let r = match_concepts(&pred, &gt)?;
    let report = json!({
        "avg_iou": percent(r.avg_iou),
        "m": r.m,
        "n": r.n,
        "precision": percent(r.precision),
        "r": r.r,
        "recall": percent(r.recall),
    });
    emit(&report, a.out.as_ref())
}

pub fn classify(a: &ClassifyArgs) -> Result<()> {
    require(&[&a.bank])?;
    let bank = FeatureBank::load(&a.bank)?;
    let (metric, name) = match a.metric {
        Metric::Cosine => (Similarity::Cosine, "cosine"),
        Metric::Dot => (Similarity::Dot, "dot"),
    };
    let acc = classify_topk(&bank, a.k, metric)?;
    let report =
        json!({ "accuracy": acc, "k": a.k, "metric": name, "queries": bank.queries.len() });
    emit(&report, a.out.as_ref())
}

pub fn train_sandbox(a: &TrainArgs, seed: u64) -> Result<()> {
    require(&[&a.scene])?;
    if let Some(c) = &a.config {
        require(&[c])?;
    }
    let scene = SyntheticScene::load(&a.scene)?;
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    cfg.seed = seed;
    if let Some(steps) = a.steps {
        cfg.total_steps = steps;
        cfg.warmup_steps = cfg.warmup_steps.min(steps);
    }
    let (v, trace) = train(&scene, &cfg)?;
    create_dir(&a.out)?;
    trace.save(&a.out)?;
    let cos = cosines(&v, &scene.u);
    let report = json!({
        "config": cfg,
        "cosines": cos,
        "final_total": trace.steps.last().map(|s| s.total),
        "steps": trace.steps.len(),
    });
    write_report(&a.out.join("report.json"), &report)?;
    for (i, c) in cos.iter().enumerate() {
        println!("concept {i}: cosine {c:.6}");
    }
    Ok(())
}

pub fn fixtures(a: &FixturesArgs, seed: u64) -> Result<()> {
    require(&[&a.spec])?;
    let mut spec: SceneSpec = read_json(&a.spec)?;
    if let Some(noise) = a.noise {
        spec.noise = noise;
    }
    let bundle = synthesize_scene(&spec, seed)?;
    create_dir(&a.out)?;
    bundle.save(&a.out)?;
    write_report(&a.out.join("spec.json"), &spec)?;
    println!(
        "fixture: {}x{} grid, {} shapes, noise {}",
        spec.height,
        spec.width,
        spec.shapes.len(),
        spec.noise
    );
    Ok(())
}
