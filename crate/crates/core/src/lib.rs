//! Estimation of 4- and 5-node graphlet frequency distributions.
//!
//! The crate provides an exact enumeration oracle, two classical sampling
//! estimators (uniform node draws and a Metropolis-Hastings random walk over
//! connected subgraphs), a learned sampler built on a graph-convolutional
//! variational auto-encoder, degree-preserving dataset generation, and a
//! benchmark harness that scores every estimator against the oracle.

pub mod baseline;
pub mod bench;
pub mod canon;
pub mod dataset;
pub mod distribution;
pub mod error;
pub mod exact;
pub mod gnns;
pub mod graph;
pub mod rng;

pub use canon::{canonical_code, classify_connected, CanonicalCode, TypeRegistry};
pub use distribution::FrequencyDistribution;
pub use error::{Error, Result};
pub use graph::{
    connected_components, degree_sequence, induced_subgraph, largest_connected_component,
    parse_edge_list, Graph, NodeSet,
};

/// Sizes the global worker pool. Call once, before any parallel work.
pub fn configure_workers(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build_global()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}
