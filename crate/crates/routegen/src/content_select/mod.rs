//! Content selection: which CAS structure should describe a path segment.
//! Feature extraction, maximum-entropy IRL fitting, and retrieval of
//! candidate structures by MI-weighted nearest neighbors with spectral
//! deduplication.

mod cluster;
mod features;
mod irl;

pub use cluster::{spectral_cluster, Clustering};
pub use features::{
    extract_context, extract_properties, ContextVector, PropertyVector, CONTEXT_DIM,
    CONTEXT_NAMES, PROPERTY_DIM, PROPERTY_NAMES,
};
pub use irl::{
    joint_features, log_likelihood, log_likelihood_grad, mi_weights, policy, train_irl,
    IrlConfig, IrlDemo, IrlError, IrlHyper, IrlModel, JOINT_DIM,
};
