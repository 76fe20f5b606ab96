//! Forward pass, subgraph sampling, edge decoding and the training
//! objective, with hand-written gradients.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::RngCore;

use super::params::{GnnsParams, Weights};
use crate::canon::classify_unchecked;
use crate::error::{Error, Result};
use crate::graph::{largest_component_of_mask, Graph, NodeSet};
use crate::rng::{derive_seed, rng_from_seed};
use crate::TypeRegistry;

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(x))` without overflow.
#[inline]
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Symmetric-normalized adjacency with self-loops, `D^-1/2 (A + I) D^-1/2`,
/// stored row-wise. Symmetric, so it is its own transpose.
#[derive(Clone, Debug)]
pub struct NormAdj {
    rows: Vec<Vec<(usize, f64)>>,
}

impl NormAdj {
    pub fn new(g: &Graph) -> Self {
        let inv_sqrt: Vec<f64> = (0..g.n_nodes())
            .map(|v| 1.0 / ((g.degree(v) + 1) as f64).sqrt())
            .collect();
        let rows = (0..g.n_nodes())
            .map(|i| {
                let mut r = Vec::with_capacity(g.degree(i) + 1);
                r.push((i, inv_sqrt[i] * inv_sqrt[i]));
                r.extend(g.neighbors(i).iter().map(|&j| (j, inv_sqrt[i] * inv_sqrt[j])));
                r
            })
            .collect();
        NormAdj { rows }
    }

    /// `Â · x`.
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(x.raw_dim());
        for (i, row) in self.rows.iter().enumerate() {
            let mut o = out.row_mut(i);
            for &(j, w) in row {
                o.scaled_add(w, &x.row(j));
            }
        }
        out
    }
}

/// Per-node embeddings `Z_n` plus the keep logits derived from them.
#[derive(Clone, Debug)]
pub struct NodeEmbeddings {
    pub z: Array2<f64>,
    pub keep_logits: Array1<f64>,
}

impl NodeEmbeddings {
    pub fn n_nodes(&self) -> usize {
        self.z.nrows()
    }
}

/// Intermediate values kept for the backward pass.
pub(crate) struct Encoded {
    pub adj: NormAdj,
    pub pre: Array2<f64>,
    pub q: Array2<f64>,
    pub emb: NodeEmbeddings,
}

fn check_shapes(g: &Graph, w: &Weights) -> Result<()> {
    if w.n_nodes() != g.n_nodes() {
        return Err(Error::config(format!(
            "model expects {} nodes, graph has {}",
            w.n_nodes(),
            g.n_nodes()
        )));
    }
    Ok(())
}

pub(crate) fn encode(g: &Graph, params: &GnnsParams) -> Result<Encoded> {
    let w = &params.weights;
    check_shapes(g, w)?;
    let adj = NormAdj::new(g);
    // One-hot features: Â · I · W0 = Â · W0.
    let pre = adj.apply(&w.w0);
    let h1 = pre.mapv(|x| x.max(0.0));
    let q = adj.apply(&h1);
    let z = q.dot(&w.w1);
    let keep_logits = z.dot(&w.keep_w) + w.keep_b[0];
    Ok(Encoded {
        adj,
        pre,
        q,
        emb: NodeEmbeddings { z, keep_logits },
    })
}

/// Two-layer GCN on one-hot node features: `Z = Â relu(Â W0) W1`.
pub fn gcn_forward(g: &Graph, params: &GnnsParams) -> Result<NodeEmbeddings> {
    Ok(encode(g, params)?.emb)
}

/// Relaxed Bernoulli draw `sigmoid((logit + ln u - ln(1 - u)) / tau)`.
pub fn relaxed_bernoulli(logit: f64, tau: f64, u: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::arg("temperature must be positive"));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::arg("uniform draw must lie in (0, 1)"));
    }
    Ok(sigmoid((logit + logistic_noise(u)) / tau))
}

#[inline]
fn logistic_noise(u: f64) -> f64 {
    u.ln() - (-u).ln_1p()
}

/// Uniform draw on the open interval (0, 1) with 32-bit resolution.
#[inline]
fn open_uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u32() as f64 + 0.5) * (1.0 / 4_294_967_296.0)
}

/// Probability that node `i` lands in the hard set, `P(soft_i > theta)`.
#[inline]
pub(crate) fn hard_keep_logit(keep_logit: f64, tau: f64, theta: f64) -> f64 {
    keep_logit - tau * logit(theta)
}

/// One sampled subgraph.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledSubgraph {
    /// Largest connected component of the hard node set.
    pub nodes: NodeSet,
    /// Relaxed mask value for every node of the host graph.
    pub soft_mask: Vec<f64>,
    /// Logistic noise behind `soft_mask`, kept so the draw can be replayed.
    pub noise: Vec<f64>,
    /// Mask-weighted sum of member embeddings.
    pub z_s: Array1<f64>,
    /// Type logits from the MLP.
    pub z_t: Array1<f64>,
    /// Redraws needed because the hard set was empty.
    pub retries: usize,
}

impl SampledSubgraph {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `sum_{i in nodes} soft_i * Z_i`.
pub fn subgraph_embedding(z: &Array2<f64>, nodes: &NodeSet, soft: &[f64]) -> Array1<f64> {
    let mut out = Array1::zeros(z.ncols());
    for &i in nodes.as_slice() {
        out.scaled_add(soft[i], &z.row(i));
    }
    out
}

/// MLP head, returns `(pre-activation, hidden, logits)`.
fn mlp_forward(w: &Weights, z_s: ArrayView1<f64>) -> (Array1<f64>, Array1<f64>, Array1<f64>) {
    let pre = z_s.dot(&w.mlp_w1) + &w.mlp_b1;
    let a = pre.mapv(|x| x.max(0.0));
    let zt = a.dot(&w.mlp_w2) + &w.mlp_b2;
    (pre, a, zt)
}

/// Type logits `z_t = MLP(z_s)`.
pub fn type_logits(params: &GnnsParams, z_s: &Array1<f64>) -> Array1<f64> {
    mlp_forward(&params.weights, z_s.view()).2
}

pub(crate) fn softmax(x: &Array1<f64>) -> Array1<f64> {
    let m = x.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = x.mapv(|v| (v - m).exp());
    let s = e.sum();
    e / s
}

/// Per-node threshold on the uniform draw: `soft_i > theta` exactly when
/// `u_i > sigmoid(-hard_logit_i)`.
pub(crate) fn keep_thresholds(hard_logits: &[f64]) -> Vec<f64> {
    hard_logits.iter().map(|&h| sigmoid(-h)).collect()
}

/// The same thresholds on the raw 32-bit draw `r`, where
/// `u = (r + 1/2) / 2^32`: `u > t` exactly when `r > floor(t * 2^32 - 1/2)`.
pub(crate) fn integer_thresholds(thresholds: &[f64]) -> Vec<i64> {
    thresholds
        .iter()
        .map(|&t| (t * 4_294_967_296.0 - 0.5).floor() as i64)
        .collect()
}

/// Draws one subgraph. Empty hard sets are redrawn up to `max_retries`
/// times with derived seeds; after that the returned subgraph is empty.
pub fn sample_subgraph(
    g: &Graph,
    emb: &NodeEmbeddings,
    params: &GnnsParams,
    seed: u64,
    max_retries: usize,
) -> Result<SampledSubgraph> {
    check_shapes(g, &params.weights)?;
    let n = g.n_nodes();
    let (tau, theta) = (params.tau, params.theta);
    let hard: Vec<f64> = emb
        .keep_logits
        .iter()
        .map(|&l| hard_keep_logit(l, tau, theta))
        .collect();
    let thr = keep_thresholds(&hard);
    let mut mask = vec![false; n];
    let mut noise = vec![0.0; n];
    let mut retries = 0;
    let nodes = loop {
        let mut rng = rng_from_seed(derive_seed(seed, retries as u64));
        let mut kept = Vec::new();
        for i in 0..n {
            let u = open_uniform(&mut rng);
            noise[i] = logistic_noise(u);
            mask[i] = u > thr[i];
            if mask[i] {
                kept.push(i);
            }
        }
        if !kept.is_empty() || retries >= max_retries {
            break largest_component_of_mask(g, &mut mask, &kept);
        }
        retries += 1;
    };
    let soft_mask: Vec<f64> = emb
        .keep_logits
        .iter()
        .zip(&noise)
        .map(|(&l, &e)| sigmoid((l + e) / tau))
        .collect();
    let nodes = NodeSet::new(nodes);
    let z_s = subgraph_embedding(&emb.z, &nodes, &soft_mask);
    let z_t = type_logits(params, &z_s);
    Ok(SampledSubgraph {
        nodes,
        soft_mask,
        noise,
        z_s,
        z_t,
        retries,
    })
}

/// Node set only, for the estimation hot path. Returns `None` when every
/// attempt produced an empty hard set. Matches [`sample_subgraph`] draw for
/// draw.
pub(crate) fn sample_nodes(
    g: &Graph,
    int_thresholds: &[i64],
    seed: u64,
    max_retries: usize,
    mask: &mut [bool],
    kept: &mut Vec<usize>,
) -> Option<Vec<usize>> {
    debug_assert_eq!(int_thresholds.len(), g.n_nodes());
    for attempt in 0..=max_retries {
        let mut rng = rng_from_seed(derive_seed(seed, attempt as u64));
        kept.resize(mask.len(), 0);
        let mut n_kept = 0;
        for (i, (m, &t)) in mask.iter_mut().zip(int_thresholds).enumerate() {
            let on = rng.next_u32() as i64 > t;
            *m = on;
            kept[n_kept] = i;
            n_kept += on as usize;
        }
        if n_kept > 0 {
            return Some(largest_component_of_mask(g, mask, &kept[..n_kept]));
        }
    }
    None
}

/// Symmetrized interaction matrices mixed by the type posterior:
/// `sum_t softmax(z_t)_t (I_t + I_t^T) / 2`.
pub fn mixed_interaction(w: &Weights, type_probs: &Array1<f64>) -> Array2<f64> {
    let k = w.embed_dim();
    let mut mix = Array2::zeros((k, k));
    for (t, &p) in type_probs.iter().enumerate() {
        if p != 0.0 {
            mix.scaled_add(p, &w.interactions.index_axis(Axis(0), t));
        }
    }
    (&mix + &mix.t()) * 0.5
}

/// Edge probabilities for every within-subgraph pair `(i, j)`, `i < j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgraphEdges {
    pub pairs: Vec<(usize, usize, f64)>,
}

/// Decoder: `p(e_ij | m) = sigmoid(z_i^T Ī_m z_j)` with `Ī_m` the
/// type-mixed interaction matrix of subgraph `m`.
pub fn decode_edges(
    emb: &NodeEmbeddings,
    subgraphs: &[SampledSubgraph],
    params: &GnnsParams,
) -> Result<Vec<SubgraphEdges>> {
    if subgraphs.iter().all(SampledSubgraph::is_empty) {
        return Err(Error::Numeric("no non-empty subgraph to decode".into()));
    }
    Ok(subgraphs
        .iter()
        .map(|sg| {
            let ibar = mixed_interaction(&params.weights, &softmax(&sg.z_t));
            let vs = sg.nodes.as_slice();
            let mut pairs = Vec::new();
            for (a, &i) in vs.iter().enumerate() {
                let y = ibar.dot(&emb.z.row(i));
                for &j in &vs[a + 1..] {
                    pairs.push((i, j, sigmoid(y.dot(&emb.z.row(j)))));
                }
            }
            SubgraphEdges { pairs }
        })
        .collect())
}

/// Sums edge probabilities over all subgraphs into an `N x N` score matrix
/// (the unnormalized reconstruction of the adjacency matrix).
pub fn aggregate_edges(n_nodes: usize, edges: &[SubgraphEdges]) -> Array2<f64> {
    let mut a = Array2::zeros((n_nodes, n_nodes));
    for e in edges {
        for &(i, j, p) in &e.pairs {
            a[[i, j]] += p;
            a[[j, i]] += p;
        }
    }
    a
}

/// Objective hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub eps: f64,
    pub size_target: f64,
    pub size_weight: f64,
    pub aux_weight: f64,
}

impl From<&super::GnnsConfig> for LossConfig {
    fn from(c: &super::GnnsConfig) -> Self {
        LossConfig {
            eps: c.eps,
            size_target: c.size_target,
            size_weight: c.size_weight,
            aux_weight: c.aux_weight,
        }
    }
}

/// Loss value and its parts. `total = -recon + kl + size + aux_weight * aux`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Mean Bernoulli log-likelihood of within-subgraph pairs.
    pub recon: f64,
    pub kl: f64,
    pub size: f64,
    /// Mean type cross-entropy over labeled subgraphs.
    pub aux: f64,
    /// Fraction of labeled subgraphs whose MLP argmax matches the label.
    pub aux_acc: f64,
    pub n_labeled: usize,
}

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// `KL(Bernoulli(q) || Bernoulli(1/2))`.
pub fn bernoulli_kl_to_half(q: f64) -> f64 {
    xlogx(q) + xlogx(1.0 - q) + std::f64::consts::LN_2
}

fn clamped_ll(p: f64, edge: bool, eps: f64) -> f64 {
    let pc = p.clamp(eps, 1.0 - eps);
    if edge {
        pc.ln()
    } else {
        (1.0 - pc).ln()
    }
}

/// Registry slot for a sampled subgraph, when it has 4 or 5 nodes.
pub fn type_label(g: &Graph, nodes: &NodeSet, registry: &TypeRegistry) -> Option<usize> {
    matches!(nodes.len(), 4 | 5).then(|| registry.lookup(&classify_unchecked(g, nodes.as_slice())))
}

/// Objective computed from already-decoded pieces.
pub fn elbo_loss(
    g: &Graph,
    subgraphs: &[SampledSubgraph],
    edge_probs: &[SubgraphEdges],
    emb: &NodeEmbeddings,
    labels: &[Option<usize>],
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    if subgraphs.iter().all(SampledSubgraph::is_empty) {
        return Err(Error::Numeric("all sampled subgraphs are empty".into()));
    }
    let mut recon_sum = 0.0;
    let mut n_recon = 0usize;
    for e in edge_probs {
        if e.pairs.is_empty() {
            continue;
        }
        let ll: f64 = e
            .pairs
            .iter()
            .map(|&(i, j, p)| clamped_ll(p, g.has_edge(i, j), cfg.eps))
            .sum();
        recon_sum += ll / e.pairs.len() as f64;
        n_recon += 1;
    }
    let recon = if n_recon > 0 { recon_sum / n_recon as f64 } else { 0.0 };
    let q: Vec<f64> = emb.keep_logits.iter().map(|&l| sigmoid(l)).collect();
    let kl: f64 = q.iter().map(|&p| bernoulli_kl_to_half(p)).sum();
    let excess = q.iter().sum::<f64>() - cfg.size_target;
    let size = cfg.size_weight * excess * excess;
    let (mut aux_sum, mut hits, mut n_lab) = (0.0, 0usize, 0usize);
    for (sg, lab) in subgraphs.iter().zip(labels) {
        if let Some(y) = *lab {
            let pi = softmax(&sg.z_t);
            aux_sum -= pi[y].ln();
            hits += (argmax(&pi) == y) as usize;
            n_lab += 1;
        }
    }
    let (aux, aux_acc) = if n_lab > 0 {
        (aux_sum / n_lab as f64, hits as f64 / n_lab as f64)
    } else {
        (0.0, 0.0)
    };
    Ok(LossBreakdown {
        total: -recon + kl + size + cfg.aux_weight * aux,
        recon,
        kl,
        size,
        aux,
        aux_acc,
        n_labeled: n_lab,
    })
}

pub(crate) fn argmax(x: &Array1<f64>) -> usize {
    let mut best = 0;
    for i in 1..x.len() {
        if x[i] > x[best] {
            best = i;
        }
    }
    best
}

/// A sampled subgraph frozen for loss evaluation: its node set, the noise
/// on those nodes, and its type label. Soft values are recomputed from the
/// current parameters, so the loss stays a smooth function of them.
#[derive(Clone, Debug)]
pub struct Draw {
    pub nodes: Vec<usize>,
    pub noise: Vec<f64>,
    pub label: Option<usize>,
}

impl Draw {
    pub fn from_sample(sg: &SampledSubgraph, label: Option<usize>) -> Self {
        let nodes = sg.nodes.as_slice().to_vec();
        let noise = nodes.iter().map(|&i| sg.noise[i]).collect();
        Draw { nodes, noise, label }
    }
}

/// Loss and (optionally) its gradient with respect to every weight, for
/// fixed draws.
pub fn evaluate(
    g: &Graph,
    params: &GnnsParams,
    draws: &[Draw],
    cfg: &LossConfig,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<Weights>)> {
    if draws.iter().all(|d| d.nodes.is_empty()) {
        return Err(Error::Numeric("all sampled subgraphs are empty".into()));
    }
    let w = &params.weights;
    let tau = params.tau;
    let enc = encode(g, params)?;
    let z = &enc.emb.z;
    let l = &enc.emb.keep_logits;
    let n = g.n_nodes();
    let k = w.embed_dim();
    let t_slots = w.n_types();

    let mut grad = want_grad.then(|| Weights::zeros_like(w));
    let mut dz = Array2::<f64>::zeros((n, k));
    let mut dl = Array1::<f64>::zeros(n);

    // KL to Bernoulli(1/2) and the size penalty, both on q = sigmoid(l).
    let q: Vec<f64> = l.iter().map(|&x| sigmoid(x)).collect();
    let kl: f64 = q.iter().map(|&p| bernoulli_kl_to_half(p)).sum();
    let excess = q.iter().sum::<f64>() - cfg.size_target;
    let size = cfg.size_weight * excess * excess;
    for i in 0..n {
        let dq = q[i] * (1.0 - q[i]);
        // d KL / d q = logit(q) = l
        dl[i] += (l[i] + 2.0 * cfg.size_weight * excess) * dq;
    }

    let n_recon = draws.iter().filter(|d| d.nodes.len() >= 2).count();
    let n_lab = draws.iter().filter(|d| d.label.is_some()).count();
    let (mut recon_sum, mut aux_sum, mut hits) = (0.0, 0.0, 0usize);

    for d in draws {
        if d.nodes.is_empty() {
            continue;
        }
        let m = d.nodes.len();
        let soft: Vec<f64> = d
            .nodes
            .iter()
            .zip(&d.noise)
            .map(|(&i, &e)| sigmoid((l[i] + e) / tau))
            .collect();
        let mut z_s = Array1::<f64>::zeros(k);
        for (&i, &s) in d.nodes.iter().zip(&soft) {
            z_s.scaled_add(s, &z.row(i));
        }
        let (pre, a, zt) = mlp_forward(w, z_s.view());
        let pi = softmax(&zt);
        let mut dpi = Array1::<f64>::zeros(t_slots);
        let mut dzt = Array1::<f64>::zeros(t_slots);

        if m >= 2 {
            let ibar = mixed_interaction(w, &pi);
            let zm = z.select(Axis(0), &d.nodes);
            let y = zm.dot(&ibar); // row a = Ī z_a (Ī symmetric)
            let n_pairs = m * (m - 1) / 2;
            let scale = 1.0 / (n_pairs as f64 * n_recon as f64);
            let mut coef = Array2::<f64>::zeros((m, m));
            let mut ll_sum = 0.0;
            for a_i in 0..m {
                for b_i in (a_i + 1)..m {
                    let x = y.row(a_i).dot(&zm.row(b_i));
                    let p = sigmoid(x);
                    let edge = g.has_edge(d.nodes[a_i], d.nodes[b_i]);
                    ll_sum += clamped_ll(p, edge, cfg.eps);
                    if p > cfg.eps && p < 1.0 - cfg.eps {
                        let target = if edge { 1.0 } else { 0.0 };
                        // loss carries -recon
                        coef[[a_i, b_i]] = -(target - p) * scale;
                    }
                }
            }
            recon_sum += ll_sum / n_pairs as f64;
            if want_grad {
                // dx/dz_a = Ī z_b, dx/dz_b = Ī z_a
                let sym_coef = &coef + &coef.t();
                let dzm = sym_coef.dot(&y);
                for (r, &i) in d.nodes.iter().enumerate() {
                    let mut row = dz.row_mut(i);
                    row += &dzm.row(r);
                }
                // dLoss/dĪ = Zmᵀ C Zm; only its symmetric part matters
                let gmat = zm.t().dot(&coef.dot(&zm));
                let gsym = (&gmat + &gmat.t()) * 0.5;
                let gr = grad.as_mut().unwrap();
                for t in 0..t_slots {
                    let it = w.interactions.index_axis(Axis(0), t);
                    // <sym(I_t), G> = <I_t, sym(G)>
                    dpi[t] = (&it * &gsym).sum();
                    let mut dit = gr.interactions.index_axis_mut(Axis(0), t);
                    dit.scaled_add(pi[t], &gsym);
                }
            }
        }

        if let Some(yl) = d.label {
            aux_sum -= pi[yl].ln();
            hits += (argmax(&pi) == yl) as usize;
            if want_grad {
                let c = cfg.aux_weight / n_lab as f64;
                dzt.scaled_add(c, &pi);
                dzt[yl] -= c;
            }
        }

        if let Some(gr) = grad.as_mut() {
            // softmax backward
            let dot = pi.dot(&dpi);
            dzt += &(&pi * &(&dpi - dot));
            // MLP backward
            gr.mlp_b2 += &dzt;
            for (h, &ah) in a.iter().enumerate() {
                if ah != 0.0 {
                    gr.mlp_w2.row_mut(h).scaled_add(ah, &dzt);
                }
            }
            let da = w.mlp_w2.dot(&dzt);
            let dpre = &da * &pre.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
            gr.mlp_b1 += &dpre;
            for (c, &zc) in z_s.iter().enumerate() {
                if zc != 0.0 {
                    gr.mlp_w1.row_mut(c).scaled_add(zc, &dpre);
                }
            }
            let dzs = w.mlp_w1.dot(&dpre);
            // z_s = sum s_i z_i
            for (&i, &s) in d.nodes.iter().zip(&soft) {
                dz.row_mut(i).scaled_add(s, &dzs);
                let ds = z.row(i).dot(&dzs);
                dl[i] += ds * s * (1.0 - s) / tau;
            }
        }
    }

    let recon = if n_recon > 0 { recon_sum / n_recon as f64 } else { 0.0 };
    let (aux, aux_acc) = if n_lab > 0 {
        (aux_sum / n_lab as f64, hits as f64 / n_lab as f64)
    } else {
        (0.0, 0.0)
    };
    let breakdown = LossBreakdown {
        total: -recon + kl + size + cfg.aux_weight * aux,
        recon,
        kl,
        size,
        aux,
        aux_acc,
        n_labeled: n_lab,
    };

    if let Some(gr) = grad.as_mut() {
        // keep head
        gr.keep_w = z.t().dot(&dl);
        gr.keep_b[0] = dl.sum();
        for i in 0..n {
            dz.row_mut(i).scaled_add(dl[i], &w.keep_w);
        }
        // Z = Q W1
        gr.w1 = enc.q.t().dot(&dz);
        let dq = dz.dot(&w.w1.t());
        // Q = Â relu(P),  P = Â W0
        let dh = enc.adj.apply(&dq);
        let dp = &dh * &enc.pre.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
        gr.w0 = enc.adj.apply(&dp);
    }
    Ok((breakdown, grad))
}

/// Central finite-difference check of [`evaluate`]'s gradient on one graph.
/// Draws are sampled once from `params` and then held fixed.
///
/// Relative error per entry is `|a - n| / max(|a|, |n|, 1e-3)`: entries
/// below the floor are compared absolutely, since their central differences
/// are dominated by round-off.
pub fn gradient_check(
    params: &GnnsParams,
    g: &Graph,
    n_draws: usize,
    cfg: &LossConfig,
    seed: u64,
) -> Result<GradCheck> {
    const H: f64 = 1e-4;
    const FLOOR: f64 = 1e-3;
    let emb = gcn_forward(g, params)?;
    let mut registry = TypeRegistry::new(params.weights.n_types());
    let mut draws = Vec::with_capacity(n_draws);
    for slot in 0..n_draws {
        let sg = sample_subgraph(g, &emb, params, derive_seed(seed, slot as u64), 8)?;
        let label = matches!(sg.nodes.len(), 4 | 5).then(|| {
            registry.registry_index(classify_unchecked(g, sg.nodes.as_slice()))
        });
        draws.push(Draw::from_sample(&sg, label));
    }
    let (_, grad) = evaluate(g, params, &draws, cfg, true)?;
    let grad = grad.expect("gradient requested");
    let mut probe = params.clone();
    let mut worst = GradCheck::default();
    for (ti, name) in super::params::TENSOR_NAMES.iter().enumerate() {
        let len = params.weights.slices()[ti].len();
        for e in 0..len {
            let orig = params.weights.slices()[ti][e];
            probe.weights.slices_mut()[ti][e] = orig + H;
            let plus = evaluate(g, &probe, &draws, cfg, false)?.0.total;
            probe.weights.slices_mut()[ti][e] = orig - H;
            let minus = evaluate(g, &probe, &draws, cfg, false)?.0.total;
            probe.weights.slices_mut()[ti][e] = orig;
            let numeric = (plus - minus) / (2.0 * H);
            let analytic = grad.slices()[ti][e];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
            worst.checked += 1;
            if !rel.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient in {name}[{e}]")));
            }
            if rel > worst.max_rel_error {
                worst.max_rel_error = rel;
                worst.worst_tensor = name;
                worst.worst_index = e;
            }
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, Default)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_tensor: &'static str,
    pub worst_index: usize,
    pub checked: usize,
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnns::GnnsConfig;
    use crate::graph::families::*;

    fn small_cfg() -> GnnsConfig {
        GnnsConfig {
            hidden: 6,
            embed_dim: 5,
            mlp_hidden: 4,
            n_types: 6,
            ..GnnsConfig::default()
        }
    }

    fn test_graph() -> Graph {
        Graph::from_edges(
            9,
            &[
                (0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3),
                (5, 6), (6, 7), (7, 8), (8, 6), (1, 4),
            ],
        )
        .unwrap()
    }

    fn dense_params(n: usize, seed: u64) -> GnnsParams {
        // keep bias near zero so sampled sets are large enough to exercise
        // the decoder and the type head
        let mut p = GnnsParams::init(n, &GnnsConfig { seed, ..small_cfg() }).unwrap();
        p.weights.keep_b[0] = 0.8;
        p
    }

    #[test]
    fn shapes_and_zero_output_layer() {
        let g = test_graph();
        let mut p = GnnsParams::init(9, &small_cfg()).unwrap();
        let e = gcn_forward(&g, &p).unwrap();
        assert_eq!(e.z.dim(), (9, 5));
        assert_eq!(e.keep_logits.len(), 9);
        p.weights.w1.fill(0.0);
        let e = gcn_forward(&g, &p).unwrap();
        assert!(e.z.iter().all(|&x| x == 0.0));
        assert!(gcn_forward(&cycle(5), &p).is_err());
    }

    #[test]
    fn normalized_adjacency_rows() {
        // on a k-regular graph every entry of Â is 1/(k+1)
        let a = NormAdj::new(&cycle(6));
        let x = Array2::from_elem((6, 1), 1.0);
        for v in a.apply(&x) {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let g = test_graph();
        let perm = [3, 7, 0, 8, 1, 5, 2, 6, 4];
        let edges: Vec<_> = g.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let h = Graph::from_edges(9, &edges).unwrap();
        let p = GnnsParams::init(9, &small_cfg()).unwrap();
        let mut q = p.clone();
        for (i, &pi) in perm.iter().enumerate() {
            q.weights.w0.row_mut(pi).assign(&p.weights.w0.row(i));
        }
        let a = gcn_forward(&g, &p).unwrap();
        let b = gcn_forward(&h, &q).unwrap();
        for (i, &pi) in perm.iter().enumerate() {
            for c in 0..5 {
                assert!((a.z[[i, c]] - b.z[[pi, c]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relaxed_bernoulli_values() {
        assert_eq!(relaxed_bernoulli(0.0, 0.5, 0.5).unwrap(), 0.5);
        assert_eq!(relaxed_bernoulli(f64::INFINITY, 0.5, 0.3).unwrap(), 1.0);
        assert_eq!(relaxed_bernoulli(f64::NEG_INFINITY, 0.5, 0.3).unwrap(), 0.0);
        assert!(relaxed_bernoulli(0.0, 0.0, 0.5).is_err());
        assert!(relaxed_bernoulli(0.0, 1.0, 0.0).is_err());
        let mut rng = rng_from_seed(11);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| relaxed_bernoulli(0.0, 0.5, open_uniform(&mut rng)).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }

    #[test]
    fn hard_keep_rate_matches_probability() {
        // P(soft > theta) = sigmoid(l - tau * logit(theta))
        let (l, tau, theta) = (0.3, 0.5, 0.7);
        let mut rng = rng_from_seed(5);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| relaxed_bernoulli(l, tau, open_uniform(&mut rng)).unwrap() > theta)
            .count();
        let want = sigmoid(hard_keep_logit(l, tau, theta));
        assert!((hits as f64 / n as f64 - want).abs() < 0.01);
    }

    #[test]
    fn sampling_is_deterministic_and_connected() {
        let g = test_graph();
        let p = dense_params(9, 2);
        let e = gcn_forward(&g, &p).unwrap();
        for seed in 0..50 {
            let a = sample_subgraph(&g, &e, &p, seed, 8).unwrap();
            let b = sample_subgraph(&g, &e, &p, seed, 8).unwrap();
            assert_eq!(a, b);
            assert!(!a.is_empty());
            let sub = crate::graph::induced_subgraph(&g, &a.nodes).unwrap();
            assert_eq!(crate::graph::connected_components(&sub).len(), 1);
            let hard: Vec<f64> = e
                .keep_logits
                .iter()
                .map(|&l| hard_keep_logit(l, p.tau, p.theta))
                .collect();
            let mut mask = vec![false; 9];
            let thr = integer_thresholds(&keep_thresholds(&hard));
            let mut lean = sample_nodes(&g, &thr, seed, 8, &mut mask, &mut Vec::new()).unwrap();
            lean.sort_unstable();
            assert_eq!(lean, a.nodes.as_slice());
        }
    }

    #[test]
    fn extreme_logits() {
        let g = test_graph();
        let mut p = GnnsParams::init(9, &small_cfg()).unwrap();
        p.weights.keep_w.fill(0.0);
        p.weights.keep_b[0] = -1e6;
        let e = gcn_forward(&g, &p).unwrap();
        let sg = sample_subgraph(&g, &e, &p, 1, 3).unwrap();
        assert!(sg.is_empty());
        assert_eq!(sg.retries, 3);
        p.weights.keep_b[0] = 1e6;
        let e = gcn_forward(&g, &p).unwrap();
        let sg = sample_subgraph(&g, &e, &p, 1, 3).unwrap();
        assert_eq!(sg.nodes, NodeSet::all(9));
    }

    #[test]
    fn decoder_properties() {
        let g = test_graph();
        let mut p = dense_params(9, 3);
        let mut e = gcn_forward(&g, &p).unwrap();
        let sg = sample_subgraph(&g, &e, &p, 4, 8).unwrap();
        assert!(sg.nodes.len() >= 2);
        // zero embeddings give 1/2 everywhere
        e.z.fill(0.0);
        let d = decode_edges(&e, std::slice::from_ref(&sg), &p).unwrap();
        assert!(d[0].pairs.iter().all(|&(_, _, q)| q == 0.5));

        // a one-hot posterior selects exactly one interaction matrix
        let w = &mut p.weights;
        let k = w.embed_dim();
        let mut pi = Array1::zeros(w.n_types());
        pi[2] = 1.0;
        let it = w.interactions.index_axis(Axis(0), 2).to_owned();
        let mix = mixed_interaction(w, &pi);
        for a in 0..k {
            for b in 0..k {
                assert!((mix[[a, b]] - 0.5 * (it[[a, b]] + it[[b, a]])).abs() < 1e-15);
            }
        }

        // symmetric in the pair
        let e = gcn_forward(&g, &p).unwrap();
        let ibar = mixed_interaction(&p.weights, &softmax(&sg.z_t));
        for i in 0..9 {
            for j in 0..9 {
                let pij = sigmoid(e.z.row(i).dot(&ibar.dot(&e.z.row(j))));
                let pji = sigmoid(e.z.row(j).dot(&ibar.dot(&e.z.row(i))));
                assert!((pij - pji).abs() < 1e-12);
            }
        }
        let agg = aggregate_edges(9, &decode_edges(&e, &[sg], &p).unwrap());
        assert_eq!(agg, agg.t());
    }

    #[test]
    fn kl_is_zero_at_half() {
        assert!(bernoulli_kl_to_half(0.5).abs() < 1e-15);
        assert!((bernoulli_kl_to_half(1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bernoulli_kl_to_half(0.1) > 0.0);
    }

    fn draws_for(g: &Graph, p: &GnnsParams, m: usize, seed: u64) -> Vec<Draw> {
        let e = gcn_forward(g, p).unwrap();
        let mut reg = TypeRegistry::new(p.weights.n_types());
        (0..m)
            .map(|s| {
                let sg = sample_subgraph(g, &e, p, derive_seed(seed, s as u64), 8).unwrap();
                let lab = matches!(sg.nodes.len(), 4 | 5)
                    .then(|| reg.registry_index(classify_unchecked(g, sg.nodes.as_slice())));
                Draw::from_sample(&sg, lab)
            })
            .collect()
    }

    #[test]
    fn clamped_loss_is_finite() {
        let g = test_graph();
        let mut p = dense_params(9, 4);
        p.weights.interactions.mapv_inplace(|x| x * 1e4);
        let draws = draws_for(&g, &p, 16, 1);
        let cfg = LossConfig::from(&small_cfg());
        let (l, grad) = evaluate(&g, &p, &draws, &cfg, true).unwrap();
        assert!(l.total.is_finite());
        assert!(grad.unwrap().all_finite());
    }

    #[test]
    fn evaluate_matches_elbo_loss() {
        let g = test_graph();
        let p = dense_params(9, 5);
        let e = gcn_forward(&g, &p).unwrap();
        let mut reg = TypeRegistry::new(6);
        let sgs: Vec<_> = (0..12).map(|s| sample_subgraph(&g, &e, &p, s, 8).unwrap()).collect();
        let labels: Vec<_> = sgs
            .iter()
            .map(|sg| {
                matches!(sg.nodes.len(), 4 | 5)
                    .then(|| reg.registry_index(classify_unchecked(&g, sg.nodes.as_slice())))
            })
            .collect();
        let cfg = LossConfig::from(&small_cfg());
        let dec = decode_edges(&e, &sgs, &p).unwrap();
        let a = elbo_loss(&g, &sgs, &dec, &e, &labels, &cfg).unwrap();
        let draws: Vec<_> = sgs.iter().zip(&labels).map(|(s, &l)| Draw::from_sample(s, l)).collect();
        let (b, _) = evaluate(&g, &p, &draws, &cfg, false).unwrap();
        assert!((a.total - b.total).abs() < 1e-10, "{a:?} vs {b:?}");
        assert!((a.recon - b.recon).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = test_graph();
        let cfg = LossConfig::from(&small_cfg());
        let p = dense_params(9, 6);
        let r = gradient_check(&p, &g, 12, &cfg, 3).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");

        // zero interactions: decoder outputs 1/2 and only the encoder path
        // through the keep head and MLP carries gradient
        let mut z = dense_params(9, 7);
        z.weights.interactions.fill(0.0);
        let r = gradient_check(&z, &g, 12, &cfg, 4).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn gradient_across_temperatures() {
        let g = test_graph();
        let cfg = LossConfig::from(&small_cfg());
        for &tau in &[1.0, 0.5, 0.1, 0.01] {
            let mut p = dense_params(9, 8);
            p.tau = tau;
            let r = gradient_check(&p, &g, 12, &cfg, 5).unwrap();
            eprintln!("tau {tau}: max relative error {:.3e}", r.max_rel_error);
            if tau >= 0.1 {
                assert!(r.max_rel_error < 1e-4, "tau {tau}: {r:?}");
            }
        }
    }

    #[test]
    fn subgraph_embedding_ignores_outside_rows() {
        let g = test_graph();
        let p = dense_params(9, 9);
        let e = gcn_forward(&g, &p).unwrap();
        let sg = sample_subgraph(&g, &e, &p, 3, 8).unwrap();
        assert!(sg.nodes.len() < 9);
        let mut z = e.z.clone();
        for i in 0..9 {
            if !sg.nodes.contains(i) {
                z.row_mut(i).fill(123.0);
            }
        }
        let a = subgraph_embedding(&e.z, &sg.nodes, &sg.soft_mask);
        let b = subgraph_embedding(&z, &sg.nodes, &sg.soft_mask);
        assert_eq!(a, b);
        assert_eq!(a, sg.z_s);
        assert_eq!(type_logits(&p, &a), sg.z_t);
    }

    #[test]
    fn node_masks_are_uncorrelated() {
        let g = test_graph();
        let mut p = GnnsParams::init(9, &small_cfg()).unwrap();
        p.weights.keep_w.fill(0.0);
        p.weights.keep_b[0] = 0.0;
        let e = gcn_forward(&g, &p).unwrap();
        let n = 20_000;
        let mut x = vec![[0.0f64; 9]; n];
        for (s, row) in x.iter_mut().enumerate() {
            let sg = sample_subgraph(&g, &e, &p, s as u64, 0).unwrap();
            for i in 0..9 {
                row[i] = (sg.noise[i] > 0.0) as u8 as f64;
            }
        }
        for a in 0..9 {
            for b in (a + 1)..9 {
                let (mut ma, mut mb, mut mab) = (0.0, 0.0, 0.0);
                for row in &x {
                    ma += row[a];
                    mb += row[b];
                    mab += row[a] * row[b];
                }
                let nf = n as f64;
                let cov = mab / nf - (ma / nf) * (mb / nf);
                let corr = cov / 0.25;
                // 5 standard errors at n = 20000
                assert!(corr.abs() < 5.0 / nf.sqrt(), "nodes {a},{b}: {corr}");
            }
        }
    }
}
