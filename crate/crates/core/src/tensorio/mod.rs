//! Tensor I/O, bilinear resizing and attention aggregation.

mod attention;
mod rawt;
mod resize;

pub use attention::{aggregate_attention, AggregatedAttention, AttentionLayer, AttentionStack};
pub use rawt::{load_tensor, save_tensor, Dtype, RawtElement, Tensor, TensorData};
pub use resize::bilinear_resize;
