//! Phenotype construction and execution: dense, convolution and transpose
//! convolution layers with hand-written backward passes and Adam updates.

pub mod activation;
mod conv;
mod network;
mod params;
mod scalar;

pub use conv::ConvGeometry;
pub use network::{build_network, Gradients, Network, TransferReport};
pub use params::{
    AdamConfig, AdamState, LayerGrads, ParamEntry, ParamKey, ParamStore, ShapeSignature,
};
pub use scalar::{gemm, Mat, Scalar};
