use std::collections::BTreeMap;
use std::str::FromStr;

use rayon::prelude::*;

use super::model::{gcn_forward, hard_keep_logit, integer_thresholds, keep_thresholds, log_sigmoid, sample_nodes};
use super::train::GnnsModel;
use crate::canon::{classify_unchecked, CanonicalCode};
use crate::distribution::FrequencyDistribution;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::derive_seed;

/// How kept subgraphs are weighted when forming the distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Weighting {
    /// Each kept node set counts `1 / P(set is a component of the hard mask)`.
    #[default]
    InverseInclusion,
    /// Raw histogram of kept sets.
    Uniform,
}

impl FromStr for Weighting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse-inclusion" | "ipw" => Ok(Weighting::InverseInclusion),
            "uniform" | "raw" => Ok(Weighting::Uniform),
            _ => Err(Error::arg(format!("unknown weighting '{s}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EstimateConfig {
    /// Sampling slots `M`.
    pub samples: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool. Results do not depend
    /// on this.
    pub workers: Option<usize>,
    pub weighting: Weighting,
    pub max_retries: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            samples: 1024,
            seed: 0,
            workers: None,
            weighting: Weighting::default(),
            max_retries: 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Estimate {
    pub dist: FrequencyDistribution,
    pub samples: usize,
    /// Slots that produced a non-empty node set.
    pub m_effective: usize,
    /// Slots whose node set had 4 or 5 nodes.
    pub kept: usize,
    pub kept_fraction: f64,
    pub mean_component_size: f64,
}

struct SlotResult {
    size: usize,
    hit: Option<(CanonicalCode, f64)>,
}

fn log_inclusion(g: &Graph, nodes: &[usize], hard: &[f64], in_set: &mut [bool]) -> f64 {
    for &i in nodes {
        in_set[i] = true;
    }
    let mut lp = 0.0;
    for &i in nodes {
        lp += log_sigmoid(hard[i]);
        for &j in g.neighbors(i) {
            if !in_set[j] {
                // mark boundary nodes once
                in_set[j] = true;
                lp += log_sigmoid(-hard[j]);
            }
        }
    }
    for &i in nodes {
        in_set[i] = false;
        for &j in g.neighbors(i) {
            in_set[j] = false;
        }
    }
    lp
}

/// Estimates the combined 4/5-node distribution of `g` from `cfg.samples`
/// independent subgraph draws.
pub fn estimate_distribution(model: &GnnsModel, g: &Graph, cfg: &EstimateConfig) -> Result<Estimate> {
    model.check_graph(g)?;
    if cfg.samples == 0 {
        return Err(Error::arg("samples must be positive"));
    }
    let run = || -> Result<Estimate> {
        let emb = gcn_forward(g, &model.params)?;
        let (tau, theta) = (model.params.tau, model.params.theta);
        let hard: Vec<f64> = emb
            .keep_logits
            .iter()
            .map(|&l| hard_keep_logit(l, tau, theta))
            .collect();
        if hard.iter().any(|h| !h.is_finite()) {
            return Err(Error::Numeric("non-finite keep logits".into()));
        }
        let thr = integer_thresholds(&keep_thresholds(&hard));
        let n = g.n_nodes();
        let slots: Vec<SlotResult> = (0..cfg.samples)
            .into_par_iter()
            .map_init(
                || (vec![false; n], vec![false; n], Vec::new()),
                |(mask, in_set, buf), slot| {
                    let seed = derive_seed(cfg.seed, slot as u64);
                    match sample_nodes(g, &thr, seed, cfg.max_retries, mask, buf) {
                        None => SlotResult { size: 0, hit: None },
                        Some(mut nodes) => {
                            nodes.sort_unstable();
                            let hit = matches!(nodes.len(), 4 | 5).then(|| {
                                let code = classify_unchecked(g, &nodes);
                                let lw = match cfg.weighting {
                                    Weighting::Uniform => 0.0,
                                    Weighting::InverseInclusion => {
                                        -log_inclusion(g, &nodes, &hard, in_set)
                                    }
                                };
                                (code, lw)
                            });
                            SlotResult {
                                size: nodes.len(),
                                hit,
                            }
                        }
                    }
                },
            )
            .collect();
        Ok(summarize(cfg.samples, &slots))
    };
    match cfg.workers {
        None => run(),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?
            .install(run),
    }
}

fn summarize(samples: usize, slots: &[SlotResult]) -> Estimate {
    let mut counts = BTreeMap::new();
    let shift = slots
        .iter()
        .filter_map(|s| s.hit.map(|h| h.1))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut mass: BTreeMap<CanonicalCode, f64> = BTreeMap::new();
    let (mut m_eff, mut kept, mut size_sum) = (0, 0, 0usize);
    for s in slots {
        if s.size == 0 {
            continue;
        }
        m_eff += 1;
        size_sum += s.size;
        if let Some((code, lw)) = s.hit {
            kept += 1;
            *counts.entry(code).or_insert(0u64) += 1;
            *mass.entry(code).or_insert(0.0) += (lw - shift).exp();
        }
    }
    Estimate {
        dist: FrequencyDistribution::from_weighted(vec![4, 5], &counts, &mass),
        samples,
        m_effective: m_eff,
        kept,
        kept_fraction: kept as f64 / samples as f64,
        mean_component_size: if m_eff > 0 {
            size_sum as f64 / m_eff as f64
        } else {
            0.0
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::gnm_random_graph;
    use crate::gnns::GnnsConfig;
    use crate::graph::families::*;

    fn model(n: usize, keep_b: f64) -> GnnsModel {
        let cfg = GnnsConfig {
            hidden: 8,
            embed_dim: 6,
            mlp_hidden: 4,
            n_types: 8,
            ..GnnsConfig::default()
        };
        let mut m = GnnsModel::new(n, &cfg).unwrap();
        m.params.weights.keep_b[0] = keep_b;
        m
    }

    #[test]
    fn frequencies_sum_to_one() {
        let g = gnm_random_graph(30, 50, 3).unwrap();
        let m = model(30, -1.0);
        let e = estimate_distribution(&m, &g, &EstimateConfig::default()).unwrap();
        assert!(e.kept > 0);
        assert!((e.dist.freq_sum() - 1.0).abs() < 1e-12);
        assert!(e.dist.entries.keys().all(|c| matches!(c.k(), 4 | 5)));
        assert_eq!(e.dist.total, e.kept as u64);
        assert!(e.m_effective <= e.samples);
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let g = gnm_random_graph(30, 50, 4).unwrap();
        let m = model(30, -1.0);
        let one = EstimateConfig {
            workers: Some(1),
            seed: 9,
            ..EstimateConfig::default()
        };
        let four = EstimateConfig {
            workers: Some(4),
            ..one.clone()
        };
        let a = estimate_distribution(&m, &g, &one).unwrap();
        let b = estimate_distribution(&m, &g, &four).unwrap();
        assert_eq!(a.dist.to_json_string().unwrap(), b.dist.to_json_string().unwrap());
    }

    #[test]
    fn dead_model_reports_no_effective_samples() {
        let g = cycle(8);
        let m = model(8, -1e4);
        let e = estimate_distribution(&m, &g, &EstimateConfig::default()).unwrap();
        assert_eq!(e.m_effective, 0);
        assert!(e.dist.is_empty());
    }

    #[test]
    fn wrong_node_count_is_config_error() {
        let m = model(8, 0.0);
        let r = estimate_distribution(&m, &cycle(9), &EstimateConfig::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn inclusion_probability_of_isolated_set() {
        // path 0-1-2-3-4-5: set {1,2} has boundary {0,3}
        let g = path(6);
        let hard = [0.3, -0.2, 0.5, 1.0, 0.0, 0.0];
        let mut scratch = vec![false; 6];
        let lp = log_inclusion(&g, &[1, 2], &hard, &mut scratch);
        let s = |x: f64| 1.0 / (1.0 + (-x).exp());
        let want = (s(-0.2) * s(0.5) * (1.0 - s(0.3)) * (1.0 - s(1.0))).ln();
        assert!((lp - want).abs() < 1e-12);
        assert!(scratch.iter().all(|&b| !b));
    }

    #[test]
    fn inverse_inclusion_is_unbiased_with_uniform_keep() {
        // Constant keep probability on C5: every connected 4-set is a path
        // and the only 5-set is the cycle. With weights, the 5/6 vs 1/6
        // split should come back regardless of the keep rate.
        let g = cycle(5);
        let m = model(5, 0.0);
        let mut m = m;
        m.params.weights.keep_w.fill(0.0);
        m.params.weights.keep_b[0] = 1.2;
        let e = estimate_distribution(
            &m,
            &g,
            &EstimateConfig {
                samples: 200_000,
                seed: 2,
                ..EstimateConfig::default()
            },
        )
        .unwrap();
        let path4 = crate::canon::code_for_alias("4-path").unwrap();
        assert!((e.dist.freq(&path4) - 5.0 / 6.0).abs() < 0.01, "{:?}", e.dist);
    }

    #[test]
    fn relabeling_leaves_estimate_unchanged_in_distribution() {
        let g = gnm_random_graph(16, 26, 8).unwrap();
        let perm: Vec<usize> = (0..16).map(|i| (i * 5 + 3) % 16).collect();
        let edges: Vec<_> = g.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let h = Graph::from_edges(16, &edges).unwrap();
        let a = model(16, -0.5);
        let mut b = a.clone();
        for (i, &pi) in perm.iter().enumerate() {
            b.params.weights.w0.row_mut(pi).assign(&a.params.weights.w0.row(i));
        }
        let cfg = EstimateConfig {
            samples: 100_000,
            seed: 1,
            ..EstimateConfig::default()
        };
        let ea = estimate_distribution(&a, &g, &cfg).unwrap();
        let eb = estimate_distribution(&b, &h, &EstimateConfig { seed: 2, ..cfg }).unwrap();
        assert!(crate::bench::mse(&ea.dist, &eb.dist) < 1e-4);
        let exact = crate::exact::exact_distribution(&g).unwrap();
        assert!(crate::bench::mse(&ea.dist, &exact) < 1e-3);
    }
}
