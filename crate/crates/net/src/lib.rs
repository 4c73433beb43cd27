//! Disentangled content/style translation networks with a compact CPU
//! autograd engine, trained jointly for two image domains.
//!
//! Per domain there is a content encoder, a style encoder, a content-code
//! mapper, an AdaIN generator and a multi-scale discriminator. The final
//! content-encoder block is shared by both domains.

pub mod bundle;
pub mod checkpoint;
pub mod config;
pub mod data;
mod error;
pub mod graph;
mod kernels;
pub mod model;
pub mod params;
pub mod tensor;
pub mod train;

pub use bundle::{
    adain, images_to_tensor, interpolate_style, sample_style, tensor_to_images, Direction, StyleCode, StyleSource,
    TranslatorBundle,
};
pub use config::{Init, NetConfig};
pub use error::{Error, Result};
pub use graph::{Graph, NodeId};
pub use kernels::PadMode;
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;
pub use train::{train, train_step, AdamParams, Batch, OptimizerState, TrainOptions};
