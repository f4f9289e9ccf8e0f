//! State-space scans and the network built from them.

mod block;
mod model;
mod scan;
mod selective;
mod weights;

pub use block::{block_forward, layer_norm, BlockWeights, LAYER_NORM_EPS};
pub use model::{network_forward, network_forward_traced, spectral_traversal, stem_features, ForwardTrace, SpectralTraversal};
pub use scan::{conv_kernel, conv_scan, discretize_zoh, recurrent_scan, DiscretizedParams, SsmParams, ZohMode};
pub use selective::{selective_scan, softplus, S6Weights};
pub use weights::{read_svw1, tensor_layout, write_svw1, ModelWeights, NamedTensor, SVW1_MAGIC};
