//! Undirected simple graphs and the structural primitives used by every
//! estimator: edge-list ingestion, induced subgraphs, connected components
//! and degree sequences.
//!
//! Graphs are immutable once built. Node indices are dense, `0..n_nodes`.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use rustc_hash::FxHashSet;

use crate::error::{Error, Result};

#[inline]
fn edge_key(u: usize, v: usize) -> u64 {
    let (a, b) = if u < v { (u, v) } else { (v, u) };
    ((a as u64) << 32) | b as u64
}

/// Undirected simple graph with array-backed adjacency.
#[derive(Clone, Debug)]
pub struct Graph {
    n_nodes: usize,
    /// Sorted, each pair stored as `(lo, hi)`.
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
    edge_set: FxHashSet<u64>,
    labels: Option<Vec<String>>,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.n_nodes == other.n_nodes && self.edges == other.edges
    }
}

impl Eq for Graph {}

impl Graph {
    /// Builds a simple graph, silently dropping self-loops and duplicate
    /// (including reversed) edges.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut norm = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::arg(format!(
                    "edge ({u}, {v}) out of range for {n_nodes} nodes"
                )));
            }
            if u != v {
                norm.push((u.min(v), u.max(v)));
            }
        }
        norm.sort_unstable();
        norm.dedup();
        Ok(Self::from_sorted_unique(n_nodes, norm))
    }

    /// `edges` must already be normalized, sorted and deduplicated.
    pub(crate) fn from_sorted_unique(n_nodes: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); n_nodes];
        let mut edge_set = FxHashSet::default();
        edge_set.reserve(edges.len());
        for &(u, v) in &edges {
            adj[u].push(v);
            adj[v].push(u);
            edge_set.insert(edge_key(u, v));
        }
        for nbrs in &mut adj {
            nbrs.sort_unstable();
        }
        Graph {
            n_nodes,
            edges,
            adj,
            edge_set,
            labels: None,
        }
    }

    pub fn empty() -> Self {
        Self::from_sorted_unique(0, Vec::new())
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    #[inline]
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u != v && self.edge_set.contains(&edge_key(u, v))
    }

    /// Original labels from the edge-list file, index-aligned with nodes.
    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn label(&self, v: usize) -> String {
        match &self.labels {
            Some(l) => l[v].clone(),
            None => v.to_string(),
        }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_nodes {
            return Err(Error::arg("label count does not match node count"));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Serializes to the edge-list text format, one `u v` line per edge.
    /// Isolated nodes are not representable and are lost on re-parse.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "{} {}", self.label(u), self.label(v));
        }
        out
    }

    /// Adjacency bits of the subgraph induced by `nodes`, in the order given.
    /// Pairs are taken row-major over the upper triangle; the first pair is
    /// the most significant bit.
    pub fn induced_bits(&self, nodes: &[usize]) -> u16 {
        let k = nodes.len();
        let mut bits = 0u16;
        for i in 0..k {
            for j in (i + 1)..k {
                bits = (bits << 1) | self.has_edge(nodes[i], nodes[j]) as u16;
            }
        }
        bits
    }

    fn check_nodes(&self, nodes: &NodeSet) -> Result<()> {
        match nodes.as_slice().last() {
            Some(&v) if v >= self.n_nodes => Err(Error::arg(format!(
                "node {v} out of range for {} nodes",
                self.n_nodes
            ))),
            _ => Ok(()),
        }
    }
}

/// Sorted list of distinct node indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeSet(Vec<usize>);

impl NodeSet {
    pub fn new(mut nodes: Vec<usize>) -> Self {
        nodes.sort_unstable();
        nodes.dedup();
        NodeSet(nodes)
    }

    pub fn all(n: usize) -> Self {
        NodeSet((0..n).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.0.binary_search(&v).is_ok()
    }
}

impl FromIterator<usize> for NodeSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        NodeSet::new(iter.into_iter().collect())
    }
}

impl From<Vec<usize>> for NodeSet {
    fn from(v: Vec<usize>) -> Self {
        NodeSet::new(v)
    }
}

/// Parses whitespace-separated edge lists. Lines starting with `#` and blank
/// lines are skipped; labels are mapped to dense indices in first-appearance
/// order and kept on the returned graph.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("expected 2 node labels, found {}", tokens.len()),
            });
        }
        let mut ids = [0usize; 2];
        for (slot, tok) in ids.iter_mut().zip(&tokens) {
            *slot = *index.entry(tok).or_insert_with(|| {
                labels.push((*tok).to_string());
                labels.len() - 1
            });
        }
        edges.push((ids[0], ids[1]));
    }
    let n = labels.len();
    Graph::from_edges(n, &edges)?.with_labels(labels)
}

/// Subgraph induced by `nodes`, relabeled `0..|nodes|` in sorted order.
pub fn induced_subgraph(g: &Graph, nodes: &NodeSet) -> Result<Graph> {
    g.check_nodes(nodes)?;
    let vs = nodes.as_slice();
    let mut edges = Vec::new();
    for (i, &u) in vs.iter().enumerate() {
        for (j, &v) in vs.iter().enumerate().skip(i + 1) {
            if g.has_edge(u, v) {
                edges.push((i, j));
            }
        }
    }
    Ok(Graph::from_sorted_unique(vs.len(), edges))
}

/// Maximal connected node sets, each sorted, ordered by smallest member.
pub fn connected_components(g: &Graph) -> Vec<NodeSet> {
    let n = g.n_nodes();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        queue.push_back(s);
        let mut comp = Vec::new();
        while let Some(u) = queue.pop_front() {
            comp.push(u);
            for &w in g.neighbors(u) {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        out.push(NodeSet::new(comp));
    }
    out
}

/// Largest connected component of the subgraph induced by `nodes`, in the
/// host graph's indices. Ties go to the component holding the smallest index.
pub fn largest_connected_component(g: &Graph, nodes: &NodeSet) -> Result<NodeSet> {
    g.check_nodes(nodes)?;
    let mut in_set = vec![false; g.n_nodes()];
    for &v in nodes.as_slice() {
        in_set[v] = true;
    }
    Ok(NodeSet(largest_component_of_mask(g, &mut in_set, nodes.as_slice())))
}

/// Core of [`largest_connected_component`] over a membership mask.
///
/// `members` must list the `true` entries of `mask` in increasing order. The
/// mask is consumed (cleared) as components are visited. Returns the sorted
/// node list of the winning component.
pub(crate) fn largest_component_of_mask(
    g: &Graph,
    mask: &mut [bool],
    members: &[usize],
) -> Vec<usize> {
    let mut best: Vec<usize> = Vec::new();
    let mut stack = Vec::new();
    let mut comp = Vec::new();
    for &s in members {
        if !mask[s] {
            continue;
        }
        mask[s] = false;
        stack.push(s);
        comp.clear();
        while let Some(u) = stack.pop() {
            comp.push(u);
            for &w in g.neighbors(u) {
                if mask[w] {
                    mask[w] = false;
                    stack.push(w);
                }
            }
        }
        // Members are scanned in increasing order, so an earlier component
        // already holds the smaller minimum; only a strictly larger one wins.
        if comp.len() > best.len() {
            best.clear();
            best.extend_from_slice(&comp);
        }
    }
    best.sort_unstable();
    best
}

pub fn degree_sequence(g: &Graph) -> Vec<usize> {
    (0..g.n_nodes()).map(|v| g.degree(v)).collect()
}

/// Whether the subgraph induced by a small node list is connected.
pub(crate) fn is_connected_small(g: &Graph, nodes: &[usize]) -> bool {
    let k = nodes.len();
    if k <= 1 {
        return k == 1;
    }
    let mut reached = 1u32;
    let mut frontier = 1u32;
    while frontier != 0 {
        let mut next = 0u32;
        for i in 0..k {
            if frontier & (1 << i) == 0 {
                continue;
            }
            for j in 0..k {
                if reached & (1 << j) == 0 && g.has_edge(nodes[i], nodes[j]) {
                    next |= 1 << j;
                }
            }
        }
        reached |= next;
        frontier = next;
    }
    reached.count_ones() as usize == k
}

/// Small named graphs used throughout tests, docs and the alias table.
pub mod families {
    use super::Graph;

    pub fn path(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::from_edges(n, &edges).unwrap()
    }

    pub fn cycle(n: usize) -> Graph {
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        if n > 2 {
            edges.push((n - 1, 0));
        }
        Graph::from_edges(n, &edges).unwrap()
    }

    pub fn complete(n: usize) -> Graph {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                edges.push((u, v));
            }
        }
        Graph::from_edges(n, &edges).unwrap()
    }

    /// Star with center 0 and `leaves` leaves.
    pub fn star(leaves: usize) -> Graph {
        let edges: Vec<_> = (1..=leaves).map(|i| (0, i)).collect();
        Graph::from_edges(leaves + 1, &edges).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::families::*;
    use super::*;

    #[test]
    fn parse_triangle() {
        let g = parse_edge_list("0 1\n1 2\n2 0\n").unwrap();
        assert_eq!(g.n_nodes(), 3);
        assert_eq!(g.n_edges(), 3);
    }

    #[test]
    fn parse_drops_duplicates_and_loops() {
        let g = parse_edge_list("a b\nb a\na a\n").unwrap();
        assert_eq!(g.n_nodes(), 2);
        assert_eq!(g.n_edges(), 1);
        assert_eq!(g.labels().unwrap(), ["a", "b"]);
    }

    #[test]
    fn parse_comments_blank_and_errors() {
        let g = parse_edge_list("# header\n\n x  y \n").unwrap();
        assert_eq!(g.n_edges(), 1);
        let err = parse_edge_list("1 2\n3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_edge_list("1 2 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert_eq!(parse_edge_list("").unwrap().n_nodes(), 0);
    }

    #[test]
    fn parse_yeast_sized_list() {
        // Same node/edge totals as the yeast transcription network, with
        // duplicates and reversed copies mixed in.
        let (n, m) = (688usize, 1046usize);
        let mut text = String::from("# synthetic\n");
        let mut edges = Vec::new();
        for i in 0..n {
            edges.push((i, (i + 1) % n));
        }
        let mut step = 2;
        while edges.len() < m {
            for i in 0..n {
                if edges.len() == m {
                    break;
                }
                if i % 3 == 0 {
                    edges.push((i, (i + step) % n));
                }
            }
            step += 1;
        }
        for &(u, v) in &edges {
            writeln!(text, "n{u} n{v}").unwrap();
            writeln!(text, "n{v} n{u}").unwrap();
        }
        let g = parse_edge_list(&text).unwrap();
        assert_eq!((g.n_nodes(), g.n_edges()), (688, 1046));
    }

    #[test]
    fn induced_subgraph_of_c5_is_path() {
        let c5 = cycle(5);
        let sub = induced_subgraph(&c5, &NodeSet::new(vec![0, 1, 2, 3])).unwrap();
        assert_eq!(sub.edges(), &[(0, 1), (1, 2), (2, 3)]);
        let k4 = complete(4);
        let tri = induced_subgraph(&k4, &NodeSet::new(vec![0, 1, 2])).unwrap();
        assert_eq!(tri, cycle(3));
        assert_eq!(induced_subgraph(&c5, &NodeSet::all(5)).unwrap(), c5);
        assert!(induced_subgraph(&c5, &NodeSet::new(vec![0, 7])).is_err());
    }

    #[test]
    fn components() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        let cc = connected_components(&g);
        let sizes: Vec<_> = cc.iter().map(NodeSet::len).collect();
        assert_eq!(sizes, [3, 1]);
        assert_eq!(connected_components(&cycle(5)).len(), 1);
        assert!(connected_components(&Graph::empty()).is_empty());
    }

    #[test]
    fn largest_component_rules() {
        let c5 = cycle(5);
        let lcc = |v: Vec<usize>| largest_connected_component(&c5, &NodeSet::new(v)).unwrap();
        assert_eq!(lcc(vec![0, 1, 3]).as_slice(), &[0, 1]);
        assert_eq!(lcc(vec![0, 2]).as_slice(), &[0]);
        assert_eq!(lcc(vec![4]).as_slice(), &[4]);
        assert!(lcc(vec![]).is_empty());
        // {3,4,0} wraps around: 3-4-0 is one component of size 3.
        assert_eq!(lcc(vec![0, 1, 3, 4]).as_slice(), &[0, 1, 3, 4]);
        assert_eq!(lcc(vec![0, 2, 3]).as_slice(), &[2, 3]);
    }

    #[test]
    fn degrees() {
        assert_eq!(degree_sequence(&cycle(5)), [2, 2, 2, 2, 2]);
        assert_eq!(degree_sequence(&star(4)), [4, 1, 1, 1, 1]);
    }

    #[test]
    fn small_connectivity() {
        let c5 = cycle(5);
        assert!(is_connected_small(&c5, &[0, 1, 2]));
        assert!(!is_connected_small(&c5, &[0, 2]));
        assert!(is_connected_small(&c5, &[3, 4, 0]));
    }
}
