//! Localization benchmark metrics, a prototype classifier, and synthetic scenes.

mod classify;
mod metrics;
mod synth;

pub use classify::{classify_topk, FeatureBank, Prototype, Query, Similarity};
pub use metrics::{iou, match_concepts, MatchReport, MatchedPair};
pub use synth::{random_spec, synthesize_scene, SceneBundle, SceneSpec, Shape};
