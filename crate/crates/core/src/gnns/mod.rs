//! Learned subgraph sampler: a GCN encoder proposes node-keep logits,
//! relaxed Bernoulli masks pick connected node sets, and a type-conditioned
//! bilinear decoder reconstructs their edges.

mod checkpoint;
mod estimate;
mod model;
mod params;
mod train;

pub use checkpoint::{CheckpointJson, TensorJson, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use estimate::{estimate_distribution, Estimate, EstimateConfig, Weighting};
pub use model::{
    aggregate_edges, bernoulli_kl_to_half, decode_edges, elbo_loss, evaluate, gcn_forward,
    gradient_check, mixed_interaction, relaxed_bernoulli, sample_subgraph, subgraph_embedding,
    type_label, type_logits, Draw, GradCheck, LossBreakdown, LossConfig, NodeEmbeddings,
    NormAdj, SampledSubgraph, SubgraphEdges,
};
pub use params::{Adam, GnnsConfig, GnnsParams, Weights, TENSOR_NAMES};
pub use train::{train, train_more, write_log_csv, EpochLog, GnnsModel};
