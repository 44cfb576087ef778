//! Desk-scale byte-level transformer with low-rank adapters and a resumable
//! split forward pass: the plaintext reference model and the client-side
//! compute of the split-inference pipeline.

mod adapter;
mod checkpoint;
mod config;
mod data;
mod error;
mod model;
mod train;

pub use adapter::{lora_forward, AdapterKind, LoraAdapter};
pub use checkpoint::{model_from_bytes, model_to_bytes, TOYM_MAGIC};
pub use config::{MaskMode, Target, ToyModelConfig};
pub use data::{gen_classification_data, ClassSample, NUM_CLASSES};
pub use error::{ModelError, Result};
pub use model::{
    layer_norm, self_attention_forward, AttentionWeights, Block, RoundMap, SplitPoint, SplitState,
    ToyModel, LN_EPS,
};
pub use train::{accuracy, train_toy_lora, TrainConfig, TrainReport};
