//! Degree-preserving random graph datasets with an 8:1:1 split.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Clone, Debug)]
pub struct SwapResult {
    pub graph: Graph,
    pub achieved: u64,
    pub attempts: u64,
}

fn key(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

/// Performs `n_swaps` successful double edge swaps: edges `(a,b), (c,d)`
/// become `(a,d), (c,b)` whenever that creates no self-loop or duplicate.
/// Gives up after `100 * n_swaps + 1000` attempts and reports the swaps
/// actually made.
pub fn double_edge_swap(g: &Graph, n_swaps: u64, seed: u64) -> Result<SwapResult> {
    if n_swaps == 0 {
        return Ok(SwapResult {
            graph: g.clone(),
            achieved: 0,
            attempts: 0,
        });
    }
    if g.n_edges() < 2 {
        return Err(Error::arg("double edge swaps need at least 2 edges"));
    }
    let mut rng = rng_from_seed(seed);
    let mut edges: Vec<(usize, usize)> = g.edges().to_vec();
    let mut present: FxHashSet<(usize, usize)> = edges.iter().copied().collect();
    let max_attempts = 100 * n_swaps + 1000;
    let m = edges.len();
    let (mut achieved, mut attempts) = (0u64, 0u64);
    while achieved < n_swaps && attempts < max_attempts {
        attempts += 1;
        let i = rng.random_range(0..m);
        let j = rng.random_range(0..m);
        if i == j {
            continue;
        }
        let (a, b) = edges[i];
        let (mut c, mut d) = edges[j];
        if rng.random::<bool>() {
            std::mem::swap(&mut c, &mut d);
        }
        if a == d || c == b || a == c || b == d {
            continue;
        }
        let (e1, e2) = (key(a, d), key(c, b));
        if present.contains(&e1) || present.contains(&e2) {
            continue;
        }
        present.remove(&edges[i]);
        present.remove(&edges[j]);
        present.insert(e1);
        present.insert(e2);
        edges[i] = e1;
        edges[j] = e2;
        achieved += 1;
    }
    edges.sort_unstable();
    Ok(SwapResult {
        graph: Graph::from_sorted_unique(g.n_nodes(), edges),
        achieved,
        attempts,
    })
}

/// Uniform random graph with `n` nodes and exactly `m` edges.
pub fn gnm_random_graph(n: usize, m: usize, seed: u64) -> Result<Graph> {
    let max = n * n.saturating_sub(1) / 2;
    if m > max {
        return Err(Error::arg(format!("{m} edges do not fit in {n} nodes")));
    }
    let mut rng = rng_from_seed(seed);
    let mut present = FxHashSet::default();
    while present.len() < m {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v {
            present.insert(key(u, v));
        }
    }
    let mut edges: Vec<_> = present.into_iter().collect();
    edges.sort_unstable();
    Ok(Graph::from_sorted_unique(n, edges))
}

/// Hex SHA-256 of the node count and sorted edge list.
pub fn graph_hash(g: &Graph) -> String {
    let mut h = Sha256::new();
    h.update(format!("{}\n", g.n_nodes()).as_bytes());
    for &(u, v) in g.edges() {
        h.update(format!("{u} {v}\n").as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_hash: String,
    pub seed: u64,
    pub n_swaps: u64,
    /// Fewest swaps any chain achieved; below `n_swaps` on rigid sources.
    pub min_swaps_achieved: u64,
}

#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: Vec<Graph>,
    pub valid: Vec<Graph>,
    pub test: Vec<Graph>,
    pub provenance: Provenance,
}

impl DatasetSplit {
    pub fn n_nodes(&self) -> usize {
        self.train.first().map_or(0, Graph::n_nodes)
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> impl Iterator<Item = &Graph> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

/// Sizes for an 8:1:1 split; train absorbs the rounding remainder.
pub fn split_sizes(count: usize) -> (usize, usize, usize) {
    let tenth = count / 10;
    (count - 2 * tenth, tenth, tenth)
}

/// `count` independent swap chains from `g` (default `10 * |E|` swaps
/// each), split 8:1:1 in generation order.
pub fn generate_dataset(
    g: &Graph,
    count: usize,
    n_swaps: Option<u64>,
    seed: u64,
) -> Result<DatasetSplit> {
    if count < 10 {
        return Err(Error::arg(format!("dataset needs at least 10 graphs, got {count}")));
    }
    let n_swaps = n_swaps.unwrap_or(10 * g.n_edges() as u64);
    let results: Vec<SwapResult> = (0..count)
        .into_par_iter()
        .map(|i| double_edge_swap(g, n_swaps, derive_seed(seed, i as u64)))
        .collect::<Result<_>>()?;
    let min_swaps_achieved = results.iter().map(|r| r.achieved).min().unwrap_or(0);
    let mut graphs: Vec<Graph> = results.into_iter().map(|r| r.graph).collect();
    let (n_train, n_valid, _) = split_sizes(count);
    let test = graphs.split_off(n_train + n_valid);
    let valid = graphs.split_off(n_train);
    Ok(DatasetSplit {
        train: graphs,
        valid,
        test,
        provenance: Provenance {
            source_hash: graph_hash(g),
            seed,
            n_swaps,
            min_swaps_achieved,
        },
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    schema: u32,
    n_nodes: usize,
    count: usize,
    train: usize,
    valid: usize,
    test: usize,
    #[serde(flatten)]
    provenance: Provenance,
}

const SPLITS: [&str; 3] = ["train", "valid", "test"];

/// Writes `manifest.json` plus `train/0000.edges`-style files. Node labels
/// in the files are dense indices.
pub fn write_dataset(dir: &Path, ds: &DatasetSplit) -> Result<()> {
    let manifest = Manifest {
        schema: 1,
        n_nodes: ds.n_nodes(),
        count: ds.len(),
        train: ds.train.len(),
        valid: ds.valid.len(),
        test: ds.test.len(),
        provenance: ds.provenance.clone(),
    };
    fs::create_dir_all(dir)?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    for (name, graphs) in SPLITS.iter().zip([&ds.train, &ds.valid, &ds.test]) {
        let sub = dir.join(name);
        fs::create_dir_all(&sub)?;
        for (i, g) in graphs.iter().enumerate() {
            let mut text = format!("# nodes {}\n", g.n_nodes());
            for &(u, v) in g.edges() {
                text.push_str(&format!("{u} {v}\n"));
            }
            fs::write(sub.join(format!("{i:04}.edges")), text)?;
        }
    }
    Ok(())
}

/// Parses an edge list whose labels are node indices below `n_nodes`.
pub fn parse_indexed_edge_list(text: &str, n_nodes: usize) -> Result<Graph> {
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| Error::Parse {
            line: lineno + 1,
            msg,
        };
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(bad(format!("expected 2 node indices, found {}", toks.len())));
        }
        let mut ids = [0usize; 2];
        for (slot, t) in ids.iter_mut().zip(&toks) {
            *slot = t
                .parse()
                .map_err(|_| bad(format!("{t:?} is not a node index")))?;
            if *slot >= n_nodes {
                return Err(bad(format!("node {slot} out of range for {n_nodes} nodes")));
            }
        }
        edges.push((ids[0], ids[1]));
    }
    Graph::from_edges(n_nodes, &edges)
}

/// Reads a graph file. Files starting with a `# nodes N` header (as written
/// by [`write_dataset`]) keep their node indices; anything else is parsed as
/// a labeled edge list.
pub fn read_graph(path: &Path) -> Result<Graph> {
    let text = fs::read_to_string(path)?;
    match indexed_header(&text) {
        Some(n) => parse_indexed_edge_list(&text, n),
        None => crate::graph::parse_edge_list(&text),
    }
}

fn indexed_header(text: &str) -> Option<usize> {
    let first = text.lines().map(str::trim).find(|l| !l.is_empty())?;
    first.strip_prefix("# nodes")?.trim().parse().ok()
}

pub fn read_dataset(dir: &Path) -> Result<DatasetSplit> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let mut parts: Vec<Vec<Graph>> = Vec::new();
    for (name, n) in SPLITS
        .iter()
        .zip([manifest.train, manifest.valid, manifest.test])
    {
        let mut graphs = Vec::with_capacity(n);
        for i in 0..n {
            let path = dir.join(name).join(format!("{i:04}.edges"));
            let text = fs::read_to_string(&path)?;
            graphs.push(parse_indexed_edge_list(&text, manifest.n_nodes)?);
        }
        parts.push(graphs);
    }
    let test = parts.pop().unwrap_or_default();
    let valid = parts.pop().unwrap_or_default();
    let train = parts.pop().unwrap_or_default();
    Ok(DatasetSplit {
        train,
        valid,
        test,
        provenance: manifest.provenance,
    })
}
