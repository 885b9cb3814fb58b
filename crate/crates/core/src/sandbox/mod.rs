//! Synthetic denoiser and concept-wise token optimization.
//!
//! A [`SyntheticScene`] replaces the diffusion model with a quadratic oracle
//! whose minimizer is a known embedding per concept, so training can be
//! checked against ground truth.

mod losses;
mod scene;
mod split;
mod train;

pub use losses::{
    alignment_loss, alignment_loss_with, contrastive_loss, cross_attention, masked_loss,
    oracle_residual, AlignVia, Aligner, WarmStart,
};
pub use scene::{SceneParams, SyntheticScene};
pub use split::{merge_tokens, SplitTable};
pub use train::{cosines, train, train_with_targets, StepRecord, TrainConfig, TrainTrace};
