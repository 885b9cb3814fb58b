use std::fs;
use std::path::Path;

use conceptkit::evalbench::{match_concepts, synthesize_scene, SceneSpec};
use conceptkit::localize::{localize, ConceptTable, LocalizeConfig};
use conceptkit::sandbox::{cosines, train, SyntheticScene, TrainConfig};
use conceptkit::tensorio::{aggregate_attention, load_tensor, AttentionStack};

fn spec(name: &str) -> SceneSpec {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name);
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn saved_bundle_localizes_like_the_in_memory_one() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = synthesize_scene(&spec("scene_3shapes.json"), 4).unwrap();
    let manifest = bundle.save(dir.path()).unwrap();

    let stack = AttentionStack::load_manifest(&manifest).unwrap();
    let a = aggregate_attention(&stack, (32, 32)).unwrap();
    let e = load_tensor(dir.path().join("saliency.rawt")).unwrap();
    let saliency = conceptkit::localize::SaliencyMap::new(32, 32, e.to_f64_vec()).unwrap();
    let cfg = LocalizeConfig::default();
    let table = localize(&a, &saliency, &cfg).unwrap();

    let direct = aggregate_attention(&bundle.stack, (32, 32)).unwrap();
    let expected = localize(&direct, &bundle.saliency, &cfg).unwrap();
    assert_eq!(table.masks(), expected.masks());

    let report = match_concepts(&table.masks(), &bundle.ground_truth).unwrap();
    assert_eq!((report.m, report.n, report.r), (3, 3, 3));
    assert_eq!(report.avg_iou, 1.0);

    let saved = table.save(dir.path().join("concepts")).unwrap();
    let back = ConceptTable::load(saved).unwrap();
    assert_eq!(back.masks(), table.masks());
    assert_eq!(back.merges, table.merges);
}

#[test]
fn multi_resolution_layers_still_separate_shapes() {
    let mut s = spec("scene_3shapes.json");
    s.layers = vec![[32, 32], [16, 16], [8, 8]];
    let bundle = synthesize_scene(&s, 0).unwrap();
    let a = aggregate_attention(&bundle.stack, (32, 32)).unwrap();
    let table = localize(&a, &bundle.saliency, &LocalizeConfig::default()).unwrap();
    let report = match_concepts(&table.masks(), &bundle.ground_truth).unwrap();
    // Coarse layers blur borders into extra fragments; every shape is still found.
    assert_eq!(report.recall, 1.0, "{report:?}");
    assert!(report.pairs.iter().all(|p| p.iou > 0.75), "{report:?}");
}

#[test]
fn scene_roundtrip_and_short_training() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = synthesize_scene(&spec("scene_3shapes.json"), 1).unwrap();
    let path = bundle.scene.save(dir.path(), "scene.json").unwrap();
    let scene = SyntheticScene::load(path).unwrap();
    assert_eq!(scene.u, bundle.scene.u);
    assert_eq!(scene.masks, bundle.scene.masks);

    let cfg = TrainConfig {
        warmup_steps: 60,
        total_steps: 200,
        ..Default::default()
    };
    let (v, trace) = train(&scene, &cfg).unwrap();
    assert_eq!(trace.steps.len(), 200);
    let start = cosines(&trace.merged, &scene.u);
    let end = cosines(&v, &scene.u);
    assert!(
        end.iter().zip(&start).all(|(e, s)| e >= s),
        "{start:?} -> {end:?}"
    );
}
