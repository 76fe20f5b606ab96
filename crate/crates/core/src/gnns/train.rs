use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::model::{evaluate, gcn_forward, sample_subgraph, Draw, LossConfig};
use super::params::{Adam, GnnsConfig, GnnsParams};
use crate::canon::classify_unchecked;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{derive_seed, derive_stream, rng_from_seed};
use crate::TypeRegistry;

/// A trained sampler: weights, type registry and the node count it was
/// trained for.
#[derive(Clone, Debug)]
pub struct GnnsModel {
    pub params: GnnsParams,
    pub registry: TypeRegistry,
    pub n_nodes: usize,
    pub config: GnnsConfig,
}

impl GnnsModel {
    pub fn new(n_nodes: usize, cfg: &GnnsConfig) -> Result<Self> {
        Ok(GnnsModel {
            params: GnnsParams::init(n_nodes, cfg)?,
            registry: TypeRegistry::new(cfg.n_types),
            n_nodes,
            config: cfg.clone(),
        })
    }

    pub fn check_graph(&self, g: &Graph) -> Result<()> {
        if g.n_nodes() != self.n_nodes {
            return Err(Error::config(format!(
                "model was trained for {} nodes, graph has {}",
                self.n_nodes,
                g.n_nodes()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub recon: f64,
    pub kl: f64,
    pub aux_type_acc: f64,
    pub mean_component_size: f64,
}

/// Trains a fresh model on graphs sharing one node count. One Adam step per
/// graph per epoch; graph order is reshuffled each epoch from the seed.
pub fn train(graphs: &[Graph], cfg: &GnnsConfig) -> Result<(GnnsModel, Vec<EpochLog>)> {
    let n = graphs
        .first()
        .ok_or_else(|| Error::config("no training graphs"))?
        .n_nodes();
    if let Some(g) = graphs.iter().find(|g| g.n_nodes() != n) {
        return Err(Error::config(format!(
            "training graphs must share a node count ({n} vs {})",
            g.n_nodes()
        )));
    }
    let mut model = GnnsModel::new(n, cfg)?;
    let logs = train_more(&mut model, graphs, cfg.epochs)?;
    Ok((model, logs))
}

/// Continues training `model` for `epochs` more epochs.
pub fn train_more(model: &mut GnnsModel, graphs: &[Graph], epochs: usize) -> Result<Vec<EpochLog>> {
    for g in graphs {
        model.check_graph(g)?;
    }
    let cfg = model.config.clone();
    let loss_cfg = LossConfig::from(&cfg);
    let mut adam = Adam::new(&model.params.weights, cfg.learning_rate);
    let stream = derive_stream(cfg.seed, "train");
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut logs = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let epoch_seed = derive_seed(stream, epoch as u64);
        {
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng_from_seed(epoch_seed));
        }
        let mut acc = EpochLog {
            epoch,
            ..EpochLog::default()
        };
        let mut n_acc_graphs = 0usize;
        let (mut size_sum, mut n_sets) = (0.0, 0usize);
        for (pos, &gi) in order.iter().enumerate() {
            let g = &graphs[gi];
            let step_seed = derive_seed(epoch_seed, pos as u64 + 1);
            let emb = gcn_forward(g, &model.params)?;
            let params = &model.params;
            let samples: Vec<_> = (0..cfg.samples)
                .into_par_iter()
                .map(|slot| {
                    sample_subgraph(g, &emb, params, derive_seed(step_seed, slot as u64), cfg.max_retries)
                })
                .collect::<Result<_>>()?;
            let draws: Vec<Draw> = samples
                .iter()
                .map(|sg| {
                    let label = matches!(sg.nodes.len(), 4 | 5).then(|| {
                        model
                            .registry
                            .registry_index(classify_unchecked(g, sg.nodes.as_slice()))
                    });
                    Draw::from_sample(sg, label)
                })
                .collect();
            for d in &draws {
                if !d.nodes.is_empty() {
                    size_sum += d.nodes.len() as f64;
                    n_sets += 1;
                }
            }
            if draws.iter().all(|d| d.nodes.is_empty()) {
                // Nothing to learn from this graph on this step.
                continue;
            }
            let (loss, grad) = evaluate(g, &model.params, &draws, &loss_cfg, true)?;
            if !loss.total.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}, graph {gi}"
                )));
            }
            let grad = grad.expect("gradient requested");
            if !grad.all_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient at epoch {epoch}, graph {gi}"
                )));
            }
            adam.step(&mut model.params.weights, &grad);
            acc.mean_loss += loss.total;
            acc.recon += loss.recon;
            acc.kl += loss.kl;
            acc.aux_type_acc += loss.aux_acc;
            n_acc_graphs += 1;
        }
        if n_acc_graphs > 0 {
            let d = n_acc_graphs as f64;
            acc.mean_loss /= d;
            acc.recon /= d;
            acc.kl /= d;
            acc.aux_type_acc /= d;
        }
        if n_sets > 0 {
            acc.mean_component_size = size_sum / n_sets as f64;
        }
        logs.push(acc);
    }
    Ok(logs)
}

/// Writes the per-epoch log as CSV.
pub fn write_log_csv<W: Write>(mut out: W, logs: &[EpochLog]) -> Result<()> {
    writeln!(out, "epoch,mean_loss,recon,kl,aux_type_acc,mean_component_size")?;
    for l in logs {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            l.epoch, l.mean_loss, l.recon, l.kl, l.aux_type_acc, l.mean_component_size
        )?;
    }
    Ok(())
}
