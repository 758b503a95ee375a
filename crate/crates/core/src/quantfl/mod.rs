//! Desk-scale quantized federated learning workload.

pub mod data;
pub mod idx;
pub mod model;
pub mod quantize;

pub use data::{Dataset, SyntheticBlobs};
pub use model::{evaluate, local_train, Activation, DenseLayer, DenseModel, TrainConfig};
pub use quantize::{
    apply_global, dequantize, quantize, quantize_binary, quantize_ternary, Codebook,
    QuantizedLayer, QuantizedModel,
};
