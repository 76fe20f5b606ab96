//! Canonical codes for connected graphs on 3 to 5 nodes.
//!
//! A code is the lexicographically smallest upper-triangular adjacency
//! bit-string over all node permutations. At this size exhaustive
//! minimization is exact and cheap (at most 120 permutations), and the
//! per-size lookup tables built from it make classification a single
//! array read.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::{induced_subgraph, is_connected_small, Graph, NodeSet};

pub const MIN_K: usize = 3;
pub const MAX_K: usize = 5;

/// Permutation-invariant identifier of a small graph (a graphlet type).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalCode {
    k: u8,
    bits: u16,
}

impl CanonicalCode {
    pub fn k(&self) -> usize {
        self.k as usize
    }

    pub fn bits(&self) -> u16 {
        self.bits
    }

    pub fn n_edges(&self) -> u32 {
        self.bits.count_ones()
    }

    /// Human-readable name such as `4-path` or `claw`, when one exists.
    pub fn alias(&self) -> Option<&'static str> {
        alias_table().get(self).copied()
    }

    /// `bits` must already be canonical for `k`.
    pub(crate) fn from_canonical_bits(k: usize, bits: u16) -> Self {
        debug_assert_eq!(canonical_bits(k, bits), bits);
        CanonicalCode { k: k as u8, bits }
    }

    fn hex_width(k: usize) -> usize {
        n_pairs(k).div_ceil(4)
    }
}

impl fmt::Display for CanonicalCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = Self::hex_width(self.k());
        write!(f, "{}:{:0w$x}", self.k, self.bits, w = w)
    }
}

impl FromStr for CanonicalCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::arg(format!("malformed canonical code {s:?}"));
        let (k, hex) = s.split_once(':').ok_or_else(bad)?;
        let k: usize = k.parse().map_err(|_| bad())?;
        if !(MIN_K..=MAX_K).contains(&k) {
            return Err(bad());
        }
        let bits = u16::from_str_radix(hex, 16).map_err(|_| bad())?;
        if bits >> n_pairs(k) != 0 || canonical_bits(k, bits) != bits {
            return Err(bad());
        }
        Ok(CanonicalCode { k: k as u8, bits })
    }
}

impl Serialize for CanonicalCode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CanonicalCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub(crate) fn n_pairs(k: usize) -> usize {
    k * (k - 1) / 2
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(k), &mut vec![false; k], &mut out);
    out
}

/// Unpacks upper-triangular bits into an adjacency matrix.
fn bits_to_matrix(k: usize, bits: u16) -> [[bool; MAX_K]; MAX_K] {
    let mut m = [[false; MAX_K]; MAX_K];
    let mut shift = n_pairs(k);
    for i in 0..k {
        for j in (i + 1)..k {
            shift -= 1;
            let e = (bits >> shift) & 1 == 1;
            m[i][j] = e;
            m[j][i] = e;
        }
    }
    m
}

fn minimize(k: usize, adj: &[[bool; MAX_K]; MAX_K], perms: &[Vec<usize>]) -> u16 {
    let mut best = u16::MAX;
    for p in perms {
        let mut bits = 0u16;
        for i in 0..k {
            for j in (i + 1)..k {
                bits = (bits << 1) | adj[p[i]][p[j]] as u16;
            }
        }
        best = best.min(bits);
    }
    best
}

/// raw bits -> canonical bits, one table per k in 3..=5.
fn tables() -> &'static [Vec<u16>; 3] {
    static TABLES: OnceLock<[Vec<u16>; 3]> = OnceLock::new();
    TABLES.get_or_init(|| {
        let build = |k: usize| {
            let perms = permutations(k);
            (0..1u32 << n_pairs(k))
                .map(|raw| minimize(k, &bits_to_matrix(k, raw as u16), &perms))
                .collect()
        };
        [build(3), build(4), build(5)]
    })
}

/// Canonical form of raw upper-triangular bits for a `k`-node graph.
#[inline]
pub fn canonical_bits(k: usize, raw: u16) -> u16 {
    tables()[k - MIN_K][raw as usize]
}

/// Canonical code of a whole graph with 3 to 5 nodes, by direct
/// minimization over every node permutation.
pub fn canonical_code(g: &Graph) -> Result<CanonicalCode> {
    let k = g.n_nodes();
    if !(MIN_K..=MAX_K).contains(&k) {
        return Err(Error::arg(format!(
            "canonical codes need 3..=5 nodes, got {k}"
        )));
    }
    let mut adj = [[false; MAX_K]; MAX_K];
    for &(u, v) in g.edges() {
        adj[u][v] = true;
        adj[v][u] = true;
    }
    let bits = minimize(k, &adj, &permutations(k));
    Ok(CanonicalCode { k: k as u8, bits })
}

/// Type of the connected subgraph induced by `nodes`.
pub fn classify_connected(g: &Graph, nodes: &NodeSet) -> Result<CanonicalCode> {
    let k = nodes.len();
    if !(MIN_K..=MAX_K).contains(&k) {
        return Err(Error::arg(format!(
            "can only classify 3..=5 node sets, got {k}"
        )));
    }
    if let Some(&v) = nodes.as_slice().last() {
        if v >= g.n_nodes() {
            return Err(Error::arg(format!("node {v} out of range")));
        }
    }
    if !is_connected_small(g, nodes.as_slice()) {
        return Err(Error::Disconnected(nodes.as_slice().to_vec()));
    }
    Ok(classify_unchecked(g, nodes.as_slice()))
}

/// Table lookup without range or connectivity checks. Hot path for samplers.
#[inline]
pub(crate) fn classify_unchecked(g: &Graph, nodes: &[usize]) -> CanonicalCode {
    let k = nodes.len();
    CanonicalCode {
        k: k as u8,
        bits: canonical_bits(k, g.induced_bits(nodes)),
    }
}

/// Reference path for tests: induce, then minimize.
pub fn classify_by_induction(g: &Graph, nodes: &NodeSet) -> Result<CanonicalCode> {
    canonical_code(&induced_subgraph(g, nodes)?)
}

/// Every connected graphlet type on `k` nodes, in code order.
pub fn connected_types(k: usize) -> Vec<CanonicalCode> {
    let mut codes: Vec<CanonicalCode> = (0..1u32 << n_pairs(k))
        .map(|raw| raw as u16)
        .filter(|&raw| is_connected_bits(k, raw))
        .map(|raw| CanonicalCode {
            k: k as u8,
            bits: canonical_bits(k, raw),
        })
        .collect();
    codes.sort_unstable();
    codes.dedup();
    codes
}

fn is_connected_bits(k: usize, bits: u16) -> bool {
    let m = bits_to_matrix(k, bits);
    let mut reached = 1u32;
    loop {
        let mut next = reached;
        for i in 0..k {
            if reached & (1 << i) != 0 {
                for (j, &e) in m[i].iter().enumerate().take(k) {
                    if e {
                        next |= 1 << j;
                    }
                }
            }
        }
        if next == reached {
            break;
        }
        reached = next;
    }
    reached.count_ones() as usize == k
}

/// Named graphlets: `(alias, k, edges)`.
pub const ALIASES: &[(&str, usize, &[(usize, usize)])] = &[
    ("3-path", 3, &[(0, 1), (1, 2)]),
    ("triangle", 3, &[(0, 1), (1, 2), (0, 2)]),
    ("4-path", 4, &[(0, 1), (1, 2), (2, 3)]),
    ("claw", 4, &[(0, 1), (0, 2), (0, 3)]),
    ("4-cycle", 4, &[(0, 1), (1, 2), (2, 3), (3, 0)]),
    ("paw", 4, &[(0, 1), (1, 2), (2, 0), (0, 3)]),
    ("diamond", 4, &[(0, 1), (1, 2), (2, 0), (1, 3), (2, 3)]),
    ("K4", 4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]),
    ("5-path", 5, &[(0, 1), (1, 2), (2, 3), (3, 4)]),
    ("5-star", 5, &[(0, 1), (0, 2), (0, 3), (0, 4)]),
    ("fork", 5, &[(0, 1), (1, 2), (2, 3), (1, 4)]),
    ("5-cycle", 5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]),
    ("banner", 5, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 4)]),
    ("bull", 5, &[(0, 1), (1, 2), (2, 0), (0, 3), (1, 4)]),
    ("cricket", 5, &[(0, 1), (1, 2), (2, 0), (0, 3), (0, 4)]),
    ("tadpole", 5, &[(0, 1), (1, 2), (2, 0), (0, 3), (3, 4)]),
    ("house", 5, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (1, 4)]),
    ("K2,3", 5, &[(0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4)]),
    ("dart", 5, &[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (1, 4)]),
    ("kite", 5, &[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (0, 4)]),
    ("bowtie", 5, &[(0, 1), (0, 2), (1, 2), (0, 3), (0, 4), (3, 4)]),
    ("book", 5, &[(0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4), (0, 1)]),
    ("gem", 5, &[(0, 1), (1, 2), (2, 3), (4, 0), (4, 1), (4, 2), (4, 3)]),
    ("K4-pendant", 5, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3), (3, 4)]),
    ("K2,3-chord", 5, &[(0, 3), (0, 4), (1, 3), (1, 4), (2, 3), (2, 4), (0, 2)]),
    ("wheel", 5, &[(0, 1), (1, 2), (2, 3), (3, 0), (4, 0), (4, 1), (4, 2), (4, 3)]),
    (
        "K5-P3",
        5,
        &[(0, 2), (0, 3), (0, 4), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)],
    ),
    (
        "K5-e",
        5,
        &[(0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)],
    ),
    (
        "K5",
        5,
        &[
            (0, 1),
            (0, 2),
            (0, 3),
            (0, 4),
            (1, 2),
            (1, 3),
            (1, 4),
            (2, 3),
            (2, 4),
            (3, 4),
        ],
    ),
];

fn alias_table() -> &'static HashMap<CanonicalCode, &'static str> {
    static TABLE: OnceLock<HashMap<CanonicalCode, &'static str>> = OnceLock::new();
    TABLE.get_or_init(|| {
        ALIASES
            .iter()
            .map(|&(name, k, edges)| {
                let g = Graph::from_edges(k, edges).expect("alias edges in range");
                (canonical_code(&g).expect("alias size in range"), name)
            })
            .collect()
    })
}

/// Code for a named graphlet, e.g. `code_for_alias("claw")`.
pub fn code_for_alias(name: &str) -> Option<CanonicalCode> {
    alias_table()
        .iter()
        .find(|(_, &n)| n == name)
        .map(|(&c, _)| c)
}

/// Dense type indices for the learned sampler's interaction-matrix bank.
///
/// Holds at most `capacity - 1` codes in first-seen order; the last index is
/// reserved as the overflow bucket for every code that arrives once the
/// registry is full.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RegistryJson")]
pub struct TypeRegistry {
    capacity: usize,
    codes: Vec<CanonicalCode>,
    #[serde(skip)]
    index: HashMap<CanonicalCode, usize>,
}

impl TypeRegistry {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "registry capacity must be positive");
        TypeRegistry {
            capacity,
            codes: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn from_codes(capacity: usize, codes: Vec<CanonicalCode>) -> Result<Self> {
        let mut r = TypeRegistry::new(capacity);
        if codes.len() > capacity - 1 {
            return Err(Error::arg("more codes than registry slots"));
        }
        for c in codes {
            if r.index.contains_key(&c) {
                return Err(Error::arg(format!("duplicate registry code {c}")));
            }
            r.registry_index(c);
        }
        Ok(r)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn overflow_index(&self) -> usize {
        self.capacity - 1
    }

    pub fn codes(&self) -> &[CanonicalCode] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Index of `code`, inserting it if a slot is free.
    pub fn registry_index(&mut self, code: CanonicalCode) -> usize {
        if let Some(&i) = self.index.get(&code) {
            return i;
        }
        if self.codes.len() < self.capacity - 1 {
            let i = self.codes.len();
            self.codes.push(code);
            self.index.insert(code, i);
            i
        } else {
            self.overflow_index()
        }
    }

    /// Read-only lookup; unknown codes land in the overflow bucket.
    pub fn lookup(&self, code: &CanonicalCode) -> usize {
        self.index
            .get(code)
            .copied()
            .unwrap_or_else(|| self.overflow_index())
    }
}

#[derive(Deserialize)]
struct RegistryJson {
    capacity: usize,
    codes: Vec<CanonicalCode>,
}

impl TryFrom<RegistryJson> for TypeRegistry {
    type Error = Error;
    fn try_from(r: RegistryJson) -> Result<Self> {
        if r.capacity == 0 {
            return Err(Error::arg("registry capacity must be positive"));
        }
        TypeRegistry::from_codes(r.capacity, r.codes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::families::*;

    fn relabel(g: &Graph, perm: &[usize]) -> Graph {
        let edges: Vec<_> = g.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        Graph::from_edges(g.n_nodes(), &edges).unwrap()
    }

    #[test]
    fn path_relabelings_agree() {
        let p = path(4);
        let c = canonical_code(&p).unwrap();
        assert_eq!(canonical_code(&relabel(&p, &[3, 2, 1, 0])).unwrap(), c);
        assert_eq!(canonical_code(&relabel(&p, &[2, 0, 3, 1])).unwrap(), c);
        assert_ne!(canonical_code(&cycle(4)).unwrap(), c);
    }

    #[test]
    fn size_bounds() {
        assert!(canonical_code(&path(2)).is_err());
        assert!(canonical_code(&path(6)).is_err());
    }

    #[test]
    fn classify_examples() {
        let c5 = cycle(5);
        let code = classify_connected(&c5, &NodeSet::new(vec![0, 1, 2, 3])).unwrap();
        assert_eq!(code.alias(), Some("4-path"));
        let k4 = classify_connected(&complete(4), &NodeSet::all(4)).unwrap();
        assert_eq!(k4.alias(), Some("K4"));
        let err = classify_connected(&c5, &NodeSet::new(vec![0, 1, 3])).unwrap_err();
        assert!(matches!(err, Error::Disconnected(_)));
    }

    #[test]
    fn aliases_cover_every_type_once() {
        let mut seen = std::collections::HashSet::new();
        for &(name, k, _) in ALIASES {
            let c = code_for_alias(name).unwrap();
            assert_eq!(c.k(), k);
            assert!(seen.insert(c), "{name} duplicates another alias");
        }
        for k in 3..=5 {
            for c in connected_types(k) {
                assert!(c.alias().is_some(), "{c} has no alias");
            }
        }
        assert_eq!(seen.len(), 2 + 6 + 21);
    }

    #[test]
    fn code_string_round_trip() {
        for k in 3..=5 {
            for c in connected_types(k) {
                let s = c.to_string();
                assert_eq!(s.parse::<CanonicalCode>().unwrap(), c);
            }
        }
        assert!("4:ff".parse::<CanonicalCode>().is_err());
        assert!("6:0".parse::<CanonicalCode>().is_err());
        assert!("nope".parse::<CanonicalCode>().is_err());
        // claw centred on node 0: valid graph, but not the minimal labeling
        assert!("4:38".parse::<CanonicalCode>().is_err());
    }

    #[test]
    fn registry_rules() {
        let mut r = TypeRegistry::new(16);
        let codes: Vec<_> = connected_types(4)
            .into_iter()
            .chain(connected_types(5))
            .collect();
        assert_eq!(r.registry_index(codes[0]), 0);
        assert_eq!(r.registry_index(codes[0]), 0);
        for (i, &c) in codes.iter().enumerate().take(15) {
            assert_eq!(r.registry_index(c), i);
        }
        assert_eq!(r.len(), 15);
        assert_eq!(r.registry_index(codes[15]), 15);
        assert_eq!(r.registry_index(codes[16]), 15);
        assert_eq!(r.lookup(&codes[20]), 15);
        assert_eq!(r.lookup(&codes[3]), 3);
    }
}
