//! Minimal differentiable-programming toolkit used by the encoder and decoders.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod matrix;
pub mod optim;
pub mod params;

pub use graph::{AttentionMask, Backprop, Graph, Var};
pub use matrix::Matrix;
pub use optim::{clip_global_norm, Adam, AdamConfig};
pub use params::{fan_in_uniform, Gradients, ParamGroup, ParamId, ParamStore};
