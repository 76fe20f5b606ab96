use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{GnnsConfig, GnnsParams, Weights, TENSOR_NAMES};
use super::train::GnnsModel;
use crate::canon::{CanonicalCode, TypeRegistry};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "graphlet-gnns";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorJson {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointJson {
    pub format: String,
    pub version: u32,
    pub n_nodes: usize,
    pub config: GnnsConfig,
    pub tau: f64,
    pub theta: f64,
    /// Registry codes in slot order; the overflow slot is implicit.
    pub registry: Vec<CanonicalCode>,
    pub tensors: BTreeMap<String, TensorJson>,
}

impl GnnsModel {
    pub fn to_checkpoint(&self) -> CheckpointJson {
        let w = &self.params.weights;
        let tensors = TENSOR_NAMES
            .iter()
            .zip(w.shapes())
            .zip(w.slices())
            .map(|((name, shape), data)| {
                (
                    name.to_string(),
                    TensorJson {
                        shape,
                        data: data.to_vec(),
                    },
                )
            })
            .collect();
        CheckpointJson {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            n_nodes: self.n_nodes,
            config: self.config.clone(),
            tau: self.params.tau,
            theta: self.params.theta,
            registry: self.registry.codes().to_vec(),
            tensors,
        }
    }

    pub fn from_checkpoint(ck: CheckpointJson) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::config(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let c = &ck.config;
        let mut w = Weights::zeros(ck.n_nodes, c.hidden, c.embed_dim, c.mlp_hidden, c.n_types);
        let expected = w.shapes();
        for (i, name) in TENSOR_NAMES.iter().enumerate() {
            let t = ck
                .tensors
                .get(*name)
                .ok_or_else(|| Error::config(format!("checkpoint lacks tensor '{name}'")))?;
            let len: usize = t.shape.iter().product();
            if t.shape != expected[i] || t.data.len() != len {
                return Err(Error::config(format!(
                    "tensor '{name}' has shape {:?}, expected {:?}",
                    t.shape, expected[i]
                )));
            }
            w.slices_mut()[i].copy_from_slice(&t.data);
        }
        if !w.all_finite() {
            return Err(Error::Numeric("checkpoint contains non-finite weights".into()));
        }
        let registry = TypeRegistry::from_codes(c.n_types, ck.registry.clone())
            .map_err(|e| Error::config(format!("bad registry: {e}")))?;
        Ok(GnnsModel {
            params: GnnsParams {
                weights: w,
                tau: ck.tau,
                theta: ck.theta,
            },
            registry,
            n_nodes: ck.n_nodes,
            config: ck.config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: CheckpointJson = serde_json::from_str(&fs::read_to_string(path)?)?;
        GnnsModel::from_checkpoint(ck)
    }

    /// Loads and checks that the model was built for `n_nodes`.
    pub fn load_for(path: &Path, n_nodes: usize) -> Result<Self> {
        let m = GnnsModel::load(path)?;
        if m.n_nodes != n_nodes {
            return Err(Error::config(format!(
                "checkpoint is for {} nodes, graph has {n_nodes}",
                m.n_nodes
            )));
        }
        Ok(m)
    }
}
