//! Classical estimators: uniform node-set draws and a Metropolis-Hastings
//! random walk over connected `k`-node subgraphs.

use std::collections::BTreeMap;

use rand::Rng as _;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::canon::{classify_unchecked, CanonicalCode, MAX_K};
use crate::distribution::FrequencyDistribution;
use crate::error::{Error, Result};
use crate::graph::{connected_components, is_connected_small, Graph};
use crate::rng::{derive_stream, rng_from_seed, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Naive,
    Mhrw,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Method::Naive),
            "mhrw" | "mcmc" => Ok(Method::Mhrw),
            _ => Err(Error::arg(format!("unknown baseline method {s:?}"))),
        }
    }
}

fn check_sample_k(g: &Graph, k: usize) -> Result<()> {
    if !(4..=5).contains(&k) {
        return Err(Error::arg(format!("samplers take k in {{4, 5}}, got {k}")));
    }
    if g.n_nodes() < k {
        return Err(Error::arg(format!(
            "graph has {} nodes, fewer than k = {k}",
            g.n_nodes()
        )));
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Output of a single-size sampler run.
#[derive(Clone, Debug)]
pub struct SampleRun {
    /// Within-size distribution (`k_set = [k]`); empty when nothing was kept.
    pub dist: FrequencyDistribution,
    pub k: usize,
    /// Draws for the naive sampler, post-burn-in steps for MHRW.
    pub samples: u64,
    /// Connected fraction for naive, accepted-move fraction for MHRW.
    pub acceptance_rate: f64,
}

// ---------------------------------------------------------------------------
// Naive sampling
// ---------------------------------------------------------------------------

/// Draws `k` distinct nodes uniformly and keeps the draw when the induced
/// subgraph is connected.
pub struct NaiveSampler<'g> {
    g: &'g Graph,
    k: usize,
    rng: Rng,
    draws: u64,
    counts: BTreeMap<CanonicalCode, u64>,
    buf: [usize; MAX_K],
}

impl<'g> NaiveSampler<'g> {
    pub fn new(g: &'g Graph, k: usize, seed: u64) -> Result<Self> {
        check_sample_k(g, k)?;
        Ok(NaiveSampler {
            g,
            k,
            rng: rng_from_seed(derive_stream(seed, if k == 4 { "naive-4" } else { "naive-5" })),
            draws: 0,
            counts: BTreeMap::new(),
            buf: [0; MAX_K],
        })
    }

    /// One draw; returns whether it was kept.
    pub fn draw(&mut self) -> bool {
        let n = self.g.n_nodes();
        let k = self.k;
        let mut filled = 0;
        while filled < k {
            let v = self.rng.random_range(0..n);
            if !self.buf[..filled].contains(&v) {
                self.buf[filled] = v;
                filled += 1;
            }
        }
        self.draws += 1;
        let nodes = &mut self.buf[..k];
        if !is_connected_small(self.g, nodes) {
            return false;
        }
        nodes.sort_unstable();
        *self.counts.entry(classify_unchecked(self.g, nodes)).or_insert(0) += 1;
        true
    }

    pub fn kept(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.draws == 0 {
            0.0
        } else {
            self.kept() as f64 / self.draws as f64
        }
    }

    /// Estimated number of connected `k`-subgraphs: acceptance rate × C(n, k).
    pub fn estimated_total(&self) -> f64 {
        self.acceptance_rate() * binomial(self.g.n_nodes(), self.k)
    }

    pub fn finish(&self) -> SampleRun {
        SampleRun {
            dist: FrequencyDistribution::from_counts(vec![self.k], &self.counts),
            k: self.k,
            samples: self.draws,
            acceptance_rate: self.acceptance_rate(),
        }
    }
}

/// `samples` uniform draws of `k` nodes; the distribution covers the
/// connected draws only.
pub fn naive_sample(g: &Graph, k: usize, samples: u64, seed: u64) -> Result<SampleRun> {
    if samples == 0 {
        return Err(Error::arg("sample count must be positive"));
    }
    let mut s = NaiveSampler::new(g, k, seed)?;
    for _ in 0..samples {
        s.draw();
    }
    Ok(s.finish())
}

// ---------------------------------------------------------------------------
// Metropolis-Hastings random walk
// ---------------------------------------------------------------------------

type State = [usize; MAX_K];

/// Random walk on connected `k`-node sets. Two states are adjacent when they
/// share `k - 1` nodes; proposals are uniform over neighbors and accepted with
/// probability `min(1, d(x) / d(y))`, so the stationary law is uniform over
/// the connected `k`-sets reachable from the start state.
pub struct MhrwChain<'g> {
    g: &'g Graph,
    k: usize,
    state: State,
    degree_cache: FxHashMap<State, u32>,
    rng: Rng,
    proposals: u64,
    accepted: u64,
}

const CACHE_LIMIT: usize = 1 << 20;

impl<'g> MhrwChain<'g> {
    /// Starts from a random connected `k`-set grown inside the largest
    /// connected component.
    pub fn new(g: &'g Graph, k: usize, seed: u64) -> Result<Self> {
        check_sample_k(g, k)?;
        let mut rng = rng_from_seed(derive_stream(seed, if k == 4 { "mhrw-4" } else { "mhrw-5" }));
        let comps = connected_components(g);
        let largest = comps
            .iter()
            .max_by(|a, b| a.len().cmp(&b.len()).then(b.as_slice()[0].cmp(&a.as_slice()[0])))
            .filter(|c| c.len() >= k)
            .ok_or_else(|| Error::Init(format!("no connected component with {k} nodes")))?;
        const RESTARTS: usize = 64;
        for _ in 0..RESTARTS {
            let comp = largest.as_slice();
            let mut set = vec![comp[rng.random_range(0..comp.len())]];
            while set.len() < k {
                let frontier: Vec<usize> = set
                    .iter()
                    .flat_map(|&u| g.neighbors(u).iter().copied())
                    .filter(|v| !set.contains(v))
                    .collect();
                if frontier.is_empty() {
                    break;
                }
                set.push(frontier[rng.random_range(0..frontier.len())]);
            }
            if set.len() == k {
                set.sort_unstable();
                let mut state = [usize::MAX; MAX_K];
                state[..k].copy_from_slice(&set);
                return Ok(MhrwChain {
                    g,
                    k,
                    state,
                    degree_cache: FxHashMap::default(),
                    rng,
                    proposals: 0,
                    accepted: 0,
                });
            }
        }
        Err(Error::Init(format!(
            "could not grow a connected {k}-set after {RESTARTS} restarts"
        )))
    }

    pub fn state(&self) -> &[usize] {
        &self.state[..self.k]
    }

    /// All connected `k`-sets sharing `k - 1` nodes with `x`.
    pub fn neighbor_states(&self, x: &[usize]) -> Vec<State> {
        let k = self.k;
        let mut out = Vec::new();
        let mut rest = [0usize; MAX_K];
        let mut cand: Vec<usize> = Vec::new();
        for drop in 0..k {
            let mut r = 0;
            for (i, &v) in x.iter().enumerate() {
                if i != drop {
                    rest[r] = v;
                    r += 1;
                }
            }
            cand.clear();
            for &u in &rest[..k - 1] {
                for &w in self.g.neighbors(u) {
                    if !x.contains(&w) {
                        cand.push(w);
                    }
                }
            }
            cand.sort_unstable();
            cand.dedup();
            for &w in &cand {
                let mut y = [usize::MAX; MAX_K];
                y[..k - 1].copy_from_slice(&rest[..k - 1]);
                y[k - 1] = w;
                y[..k].sort_unstable();
                if is_connected_small(self.g, &y[..k]) {
                    out.push(y);
                }
            }
        }
        out
    }

    /// Number of neighbor states, memoized.
    pub fn state_degree(&mut self, x: &State) -> u32 {
        if let Some(&d) = self.degree_cache.get(x) {
            return d;
        }
        let d = self.neighbor_states(&x[..self.k]).len() as u32;
        if self.degree_cache.len() >= CACHE_LIMIT {
            self.degree_cache.clear();
        }
        self.degree_cache.insert(*x, d);
        d
    }

    /// Metropolis-Hastings acceptance probability for a move `x -> y`.
    pub fn acceptance_probability(&mut self, x: &State, y: &State) -> f64 {
        let dx = self.state_degree(x) as f64;
        let dy = self.state_degree(y) as f64;
        (dx / dy).min(1.0)
    }

    pub fn step(&mut self) {
        let x = self.state;
        let nbrs = self.neighbor_states(&x[..self.k]);
        if nbrs.is_empty() {
            return;
        }
        self.degree_cache.entry(x).or_insert(nbrs.len() as u32);
        let y = nbrs[self.rng.random_range(0..nbrs.len())];
        self.proposals += 1;
        let p = self.acceptance_probability(&x, &y);
        if p >= 1.0 || self.rng.random::<f64>() < p {
            self.state = y;
            self.accepted += 1;
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }

    /// Nodes outside the state adjacent to it; each one extends the state to
    /// a distinct connected `(k + 1)`-set.
    pub fn boundary_size(&self) -> usize {
        let x = self.state();
        let mut b: Vec<usize> = x
            .iter()
            .flat_map(|&u| self.g.neighbors(u).iter().copied())
            .filter(|v| !x.contains(v))
            .collect();
        b.sort_unstable();
        b.dedup();
        b.len()
    }

    /// Nodes whose removal leaves the state connected; each gives a distinct
    /// connected `(k - 1)`-subset.
    pub fn non_cut_count(&self) -> usize {
        let x = self.state();
        let mut rest = Vec::with_capacity(self.k);
        (0..self.k)
            .filter(|&i| {
                rest.clear();
                rest.extend(x.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v));
                is_connected_small(self.g, &rest)
            })
            .count()
    }
}

/// Chain statistics used to weight 4- against 5-node estimates.
#[derive(Clone, Debug)]
pub struct MhrwRun {
    pub run: SampleRun,
    pub burn_in: u64,
    /// Mean boundary size over visited states.
    pub mean_boundary: f64,
    /// Mean count of non-cut nodes over visited states.
    pub mean_non_cut: f64,
}

pub fn default_burn_in(g: &Graph) -> u64 {
    10 * g.n_edges() as u64
}

/// Runs `burn_in` unrecorded steps, then classifies the state after each of
/// `samples` further steps.
pub fn mhrw_sample(
    g: &Graph,
    k: usize,
    samples: u64,
    burn_in: Option<u64>,
    seed: u64,
) -> Result<MhrwRun> {
    if samples == 0 {
        return Err(Error::arg("sample count must be positive"));
    }
    let burn_in = burn_in.unwrap_or_else(|| default_burn_in(g));
    let mut chain = MhrwChain::new(g, k, seed)?;
    for _ in 0..burn_in {
        chain.step();
    }
    let mut counts: BTreeMap<CanonicalCode, u64> = BTreeMap::new();
    let (mut boundary, mut non_cut) = (0u64, 0u64);
    for _ in 0..samples {
        chain.step();
        *counts.entry(classify_unchecked(g, chain.state())).or_insert(0) += 1;
        boundary += chain.boundary_size() as u64;
        non_cut += chain.non_cut_count() as u64;
    }
    Ok(MhrwRun {
        run: SampleRun {
            dist: FrequencyDistribution::from_counts(vec![k], &counts),
            k,
            samples,
            acceptance_rate: chain.acceptance_rate(),
        },
        burn_in,
        mean_boundary: boundary as f64 / samples as f64,
        mean_non_cut: non_cut as f64 / samples as f64,
    })
}

// ---------------------------------------------------------------------------
// Combining 4- and 5-node estimates
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct CombinedEstimate {
    pub dist: FrequencyDistribution,
    pub per_k: Vec<SampleRun>,
    /// True when only one size contributed (e.g. `S_5 = 0`).
    pub partial: bool,
    /// Estimated `N_5 / N_4`, when both sizes ran.
    pub ratio_5_to_4: Option<f64>,
    pub burn_in: Option<u64>,
}

impl CombinedEstimate {
    pub fn kept(&self) -> u64 {
        self.dist.total
    }

    pub fn acceptance_rate(&self) -> f64 {
        let samples: u64 = self.per_k.iter().map(|r| r.samples).sum();
        let weighted: f64 = self
            .per_k
            .iter()
            .map(|r| r.acceptance_rate * r.samples as f64)
            .sum();
        if samples == 0 {
            0.0
        } else {
            weighted / samples as f64
        }
    }
}

/// Merges per-size runs, weighting size `k` by `weights[k]` (an estimate of
/// the number of connected `k`-subgraphs, up to a common factor).
fn merge_runs(runs: Vec<SampleRun>, weights: &[(usize, f64)]) -> FrequencyDistribution {
    let mut counts = BTreeMap::new();
    let mut mass = BTreeMap::new();
    for r in &runs {
        let w = weights
            .iter()
            .find(|(k, _)| *k == r.k)
            .map_or(0.0, |&(_, w)| w);
        for (&code, e) in &r.dist.entries {
            counts.insert(code, e.count);
            mass.insert(code, w * e.freq);
        }
    }
    let k_set = runs.iter().map(|r| r.k).collect();
    FrequencyDistribution::from_weighted(k_set, &counts, &mass)
}

/// Runs a baseline for both sizes and merges them into one distribution
/// with a shared denominator.
///
/// Naive runs weight each size by `acceptance × C(n, k)`. MHRW runs use the
/// double-counting identity `N_5 · E_5[non-cut nodes] = N_4 · E_4[boundary]`,
/// both expectations taken under the chains' uniform stationary laws.
pub fn combined_baseline_distribution(
    g: &Graph,
    method: Method,
    samples_4: u64,
    samples_5: u64,
    burn_in: Option<u64>,
    seed: u64,
) -> Result<CombinedEstimate> {
    if samples_4 == 0 && samples_5 == 0 {
        return Err(Error::arg("at least one of S_4, S_5 must be positive"));
    }
    let sizes: Vec<(usize, u64)> = [(4, samples_4), (5, samples_5)]
        .into_iter()
        .filter(|&(_, s)| s > 0)
        .collect();
    match method {
        Method::Naive => {
            let mut runs = Vec::new();
            let mut weights = Vec::new();
            for &(k, s) in &sizes {
                let mut sampler = NaiveSampler::new(g, k, seed)?;
                for _ in 0..s {
                    sampler.draw();
                }
                weights.push((k, sampler.estimated_total()));
                runs.push(sampler.finish());
            }
            let ratio = ratio_from(&weights);
            Ok(CombinedEstimate {
                dist: merge_runs(runs.clone(), &weights),
                partial: runs.len() < 2,
                per_k: runs,
                ratio_5_to_4: ratio,
                burn_in: None,
            })
        }
        Method::Mhrw => {
            let mut mh = Vec::new();
            for &(k, s) in &sizes {
                mh.push(mhrw_sample(g, k, s, burn_in, seed)?);
            }
            let (weights, ratio) = mhrw_weights(&mh);
            let burn = mh.first().map(|r| r.burn_in);
            let runs: Vec<SampleRun> = mh.into_iter().map(|r| r.run).collect();
            Ok(CombinedEstimate {
                dist: merge_runs(runs.clone(), &weights),
                partial: runs.len() < 2,
                per_k: runs,
                ratio_5_to_4: ratio,
                burn_in: burn,
            })
        }
    }
}

fn ratio_from(weights: &[(usize, f64)]) -> Option<f64> {
    let w4 = weights.iter().find(|w| w.0 == 4)?.1;
    let w5 = weights.iter().find(|w| w.0 == 5)?.1;
    (w4 > 0.0).then(|| w5 / w4)
}

fn mhrw_weights(runs: &[MhrwRun]) -> (Vec<(usize, f64)>, Option<f64>) {
    let r4 = runs.iter().find(|r| r.run.k == 4);
    let r5 = runs.iter().find(|r| r.run.k == 5);
    match (r4, r5) {
        (Some(a), Some(b)) if b.mean_non_cut > 0.0 => {
            let ratio = a.mean_boundary / b.mean_non_cut;
            (vec![(4, 1.0), (5, ratio)], Some(ratio))
        }
        _ => (runs.iter().map(|r| (r.run.k, 1.0)).collect(), None),
    }
}

/// Naive baseline drawn until at least `target_kept` connected samples are
/// collected across both sizes (equal draws per size), or `max_draws` per
/// size is reached. Used to compare estimators at matched kept counts.
pub fn naive_combined_until_kept(
    g: &Graph,
    target_kept: u64,
    max_draws: u64,
    seed: u64,
) -> Result<CombinedEstimate> {
    let mut s4 = NaiveSampler::new(g, 4, seed)?;
    let mut s5 = NaiveSampler::new(g, 5, seed)?;
    while s4.kept() + s5.kept() < target_kept && s4.draws() < max_draws {
        s4.draw();
        s5.draw();
    }
    let weights = vec![(4, s4.estimated_total()), (5, s5.estimated_total())];
    let runs = vec![s4.finish(), s5.finish()];
    Ok(CombinedEstimate {
        dist: merge_runs(runs.clone(), &weights),
        partial: false,
        per_k: runs,
        ratio_5_to_4: ratio_from(&weights),
        burn_in: None,
    })
}
