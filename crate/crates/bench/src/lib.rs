//! Shared fixtures for the criterion benchmarks.

use graphlet_core::dataset::{generate_dataset, gnm_random_graph};
use graphlet_core::gnns::{train, GnnsConfig, GnnsModel};
use graphlet_core::Graph;

/// Node and edge counts of the power-grid network used as the reference
/// source graph.
pub const ELEC_NODES: usize = 252;
pub const ELEC_EDGES: usize = 397;

/// A random graph of power-grid size.
pub fn elec_like(seed: u64) -> Graph {
    gnm_random_graph(ELEC_NODES, ELEC_EDGES, seed).expect("edge count fits")
}

/// A small learned sampler trained briefly on rewirings of `source`.
pub fn quick_model(source: &Graph, seed: u64) -> GnnsModel {
    let ds = generate_dataset(source, 20, None, seed).expect("dataset");
    let cfg = GnnsConfig {
        hidden: 32,
        embed_dim: 32,
        mlp_hidden: 32,
        n_types: 28,
        samples: 64,
        epochs: 1,
        seed,
        ..GnnsConfig::default()
    };
    train(&ds.train, &cfg).expect("training").0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_sizes() {
        let g = elec_like(0);
        assert_eq!((g.n_nodes(), g.n_edges()), (ELEC_NODES, ELEC_EDGES));
    }
}
