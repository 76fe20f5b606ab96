//! Exact graphlet counts by ESU enumeration, plus an all-subsets brute force
//! kept as an independent check.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::canon::{canonical_bits, classify_by_induction, n_pairs, CanonicalCode, MAX_K, MIN_K};
use crate::distribution::FrequencyDistribution;
use crate::error::{Error, Result};
use crate::graph::{is_connected_small, Graph, NodeSet};

/// Largest graph the brute-force oracle will enumerate.
pub const BRUTE_FORCE_MAX_NODES: usize = 20;

fn check_k(k: usize) -> Result<()> {
    if (MIN_K..=MAX_K).contains(&k) {
        Ok(())
    } else {
        Err(Error::arg(format!("graphlet size must be in 3..=5, got {k}")))
    }
}

/// Calls `visit` once for every connected `k`-node set whose smallest node
/// is `root` (ESU with the exclusive-neighborhood rule).
pub fn esu_from_root<F: FnMut(&[usize])>(g: &Graph, k: usize, root: usize, visit: &mut F) {
    let ext: Vec<usize> = g.neighbors(root).iter().copied().filter(|&u| u > root).collect();
    let mut sub = Vec::with_capacity(k);
    sub.push(root);
    extend(g, k, root, &mut sub, ext, visit);
}

fn extend<F: FnMut(&[usize])>(
    g: &Graph,
    k: usize,
    root: usize,
    sub: &mut Vec<usize>,
    mut ext: Vec<usize>,
    visit: &mut F,
) {
    if sub.len() == k {
        visit(sub);
        return;
    }
    while let Some(w) = ext.pop() {
        let mut next = ext.clone();
        if sub.len() + 1 < k {
            for &u in g.neighbors(w) {
                if u <= root || sub.contains(&u) || next.contains(&u) || u == w {
                    continue;
                }
                // exclusive: u must not already neighbor the current subgraph
                if sub.iter().any(|&s| g.has_edge(s, u)) {
                    continue;
                }
                next.push(u);
            }
        }
        sub.push(w);
        extend(g, k, root, sub, next, visit);
        sub.pop();
    }
}

/// Counts per canonical code of every connected induced `k`-node subgraph.
/// Each node set is counted once. Work is split across roots.
pub fn enumerate_connected(g: &Graph, k: usize) -> Result<BTreeMap<CanonicalCode, u64>> {
    check_k(k)?;
    let table_len = 1usize << n_pairs(k);
    let raw = (0..g.n_nodes())
        .into_par_iter()
        .fold(
            || vec![0u64; table_len],
            |mut acc, root| {
                esu_from_root(g, k, root, &mut |nodes| {
                    acc[g.induced_bits(nodes) as usize] += 1;
                });
                acc
            },
        )
        .reduce(
            || vec![0u64; table_len],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    Ok(collapse_raw_counts(k, &raw))
}

/// Folds counts indexed by raw adjacency bits into canonical codes.
fn collapse_raw_counts(k: usize, raw: &[u64]) -> BTreeMap<CanonicalCode, u64> {
    let mut out = BTreeMap::new();
    for (bits, &c) in raw.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let canon = canonical_bits(k, bits as u16);
        let code = CanonicalCode::from_canonical_bits(k, canon);
        *out.entry(code).or_insert(0) += c;
    }
    out
}

/// Combined 4- and 5-node distribution with a shared denominator.
pub fn exact_distribution(g: &Graph) -> Result<FrequencyDistribution> {
    exact_distribution_for(g, &[4, 5])
}

pub fn exact_distribution_for(g: &Graph, ks: &[usize]) -> Result<FrequencyDistribution> {
    let mut counts = BTreeMap::new();
    for &k in ks {
        counts.extend(enumerate_connected(g, k)?);
    }
    Ok(FrequencyDistribution::from_counts(ks.to_vec(), &counts))
}

/// Test oracle: visits all `C(n, k)` node subsets and keeps the connected
/// ones. Refuses graphs above [`BRUTE_FORCE_MAX_NODES`].
pub fn brute_force_counts(g: &Graph, k: usize) -> Result<BTreeMap<CanonicalCode, u64>> {
    check_k(k)?;
    let n = g.n_nodes();
    if n > BRUTE_FORCE_MAX_NODES {
        return Err(Error::TooLarge(format!(
            "brute force capped at {BRUTE_FORCE_MAX_NODES} nodes, graph has {n}"
        )));
    }
    let mut out = BTreeMap::new();
    if n < k {
        return Ok(out);
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if is_connected_small(g, &idx) {
            // Full minimization rather than the lookup table, so the oracle
            // shares no classification shortcut with the ESU path.
            let code = classify_by_induction(g, &NodeSet::new(idx.clone()))?;
            *out.entry(code).or_insert(0) += 1;
        }
        // next combination in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if idx[i] < n - k + i {
                break;
            }
        }
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

pub fn brute_force_distribution(g: &Graph, k: usize) -> Result<FrequencyDistribution> {
    let counts = brute_force_counts(g, k)?;
    Ok(FrequencyDistribution::from_counts(vec![k], &counts))
}
