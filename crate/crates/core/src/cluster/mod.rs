//! Identity clustering and per-cluster subnetwork masks.

mod kmeans;
mod mapping;
mod metrics;

pub use kmeans::{kmeans, kmeans_plus_plus, lloyd, wcss, ClusterModel, LloydRun, MAX_ITERATIONS, RESTARTS};
pub use mapping::{
    estimated_drop_fraction, generate_mask, standardize_centers, threshold_mask, MappingNetwork, MaskRegistry,
    DEFAULT_LAMBDA, MAPPING_GAIN, MAPPING_HIDDEN, MAPPING_RETRIES,
};
pub use metrics::{adjusted_rand_index, silhouette};
