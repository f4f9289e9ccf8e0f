//! Spectral traversal for state-space vision backbones.
//!
//! Patch features come from a linear stem aggregated over the four quarter
//! turns of the input ([`patch_embed`]). A k-nearest-neighbor affinity graph
//! over those features ([`spectral_graph`]) yields a normalized Laplacian whose
//! smallest eigenvectors ([`eigensolver`]) order the patches into traversal
//! sequences ([`traversal`]). Selective-scan state-space blocks ([`ssm`]) run
//! over every sequence, and the results are scattered back to the grid and
//! merged.
//!
//! Because the traversal depends only on feature content, quarter-turn
//! rotations of the input leave the sequence of visited patch contents, and
//! therefore the network output, unchanged.

pub mod cli;
pub mod config;
pub mod eigensolver;
pub mod error;
pub mod fixtures;
pub mod flops;
pub mod patch_embed;
pub mod rng;
pub mod spectral_graph;
pub mod ssm;
pub mod tensor_io;
pub mod traversal;

pub use eigensolver::{
    canonicalize_signs, canonicalize_signs_with, dense_eig_oracle, lanczos_smallest, EigConfig, EigReport, SignRule,
    SpectralBasis,
};
pub use error::{Error, Result};
pub use patch_embed::{patchify, rfn_aggregate, FeatureMap, StemWeights};
pub use spectral_graph::{
    build_adjacency, flatten_features, knn_neighbors, normalized_laplacian, sigma_estimate, GraphConfig,
    NodeFeatures, PatchGraph, SparseSymMatrix,
};
pub use tensor_io::{read_ppm, rotate_quarter, synth_two_cluster, write_ppm, ImageTensor, QuarterTurn};
pub use traversal::{
    apply_scan, build_plan, downsample_plan, merge_scan, pool_indices, MergeWeights, PoolIndexMap, TokenSequence,
    TraversalPlan,
};
