use ndarray::{Array1, Array2, Array3};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_stream, rng_from_seed, Rng};

/// Architecture and training hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnsConfig {
    /// Width of the hidden GCN layer.
    pub hidden: usize,
    /// Node embedding dimension `K`.
    pub embed_dim: usize,
    /// Hidden width of the type-prediction MLP.
    pub mlp_hidden: usize,
    /// Number of subgraph-type slots `T` (last slot is overflow).
    pub n_types: usize,
    /// Subgraphs drawn per graph per training step (`M`).
    pub samples: usize,
    pub tau: f64,
    pub theta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Target expected number of kept nodes for the size penalty.
    pub size_target: f64,
    pub size_weight: f64,
    /// Weight of the type cross-entropy term.
    pub aux_weight: f64,
    /// Likelihood clamp.
    pub eps: f64,
    /// Redraws for a slot whose hard node set came out empty.
    pub max_retries: usize,
}

impl Default for GnnsConfig {
    fn default() -> Self {
        GnnsConfig {
            hidden: 64,
            embed_dim: 256,
            mlp_hidden: 64,
            n_types: 16,
            samples: 1024,
            tau: 0.5,
            theta: 0.5,
            learning_rate: 1e-3,
            epochs: 20,
            seed: 0,
            size_target: 4.5,
            size_weight: 0.1,
            aux_weight: 1.0,
            eps: 1e-7,
            max_retries: 8,
        }
    }
}

impl GnnsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m));
        if self.hidden == 0 || self.embed_dim == 0 || self.mlp_hidden == 0 {
            return bad("layer widths must be positive");
        }
        if self.n_types < 2 {
            return bad("need at least 2 type slots (one is overflow)");
        }
        if self.samples == 0 {
            return bad("samples per step must be positive");
        }
        if !(self.tau > 0.0) {
            return bad("temperature must be positive");
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return bad("likelihood clamp must lie in (0, 0.5)");
        }
        Ok(())
    }
}

/// Every trainable tensor. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    /// `N x hidden`; rows are indexed by node since features are one-hot.
    pub w0: Array2<f64>,
    /// `hidden x K`.
    pub w1: Array2<f64>,
    /// `K -> 1` head mapping an embedding to a node-keep logit.
    pub keep_w: Array1<f64>,
    pub keep_b: Array1<f64>,
    pub mlp_w1: Array2<f64>,
    pub mlp_b1: Array1<f64>,
    pub mlp_w2: Array2<f64>,
    pub mlp_b2: Array1<f64>,
    /// One `K x K` interaction matrix per type slot.
    pub interactions: Array3<f64>,
}

pub const TENSOR_NAMES: [&str; 9] = [
    "w0",
    "w1",
    "keep_w",
    "keep_b",
    "mlp_w1",
    "mlp_b1",
    "mlp_w2",
    "mlp_b2",
    "interactions",
];

impl Weights {
    pub fn zeros(n_nodes: usize, hidden: usize, k: usize, mlp_hidden: usize, t: usize) -> Self {
        Weights {
            w0: Array2::zeros((n_nodes, hidden)),
            w1: Array2::zeros((hidden, k)),
            keep_w: Array1::zeros(k),
            keep_b: Array1::zeros(1),
            mlp_w1: Array2::zeros((k, mlp_hidden)),
            mlp_b1: Array1::zeros(mlp_hidden),
            mlp_w2: Array2::zeros((mlp_hidden, t)),
            mlp_b2: Array1::zeros(t),
            interactions: Array3::zeros((t, k, k)),
        }
    }

    pub fn zeros_like(other: &Weights) -> Self {
        let (n, h) = other.w0.dim();
        let (t, k, _) = other.interactions.dim();
        Weights::zeros(n, h, k, other.mlp_w1.ncols(), t)
    }

    pub fn n_nodes(&self) -> usize {
        self.w0.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w0.ncols()
    }

    pub fn embed_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn mlp_hidden(&self) -> usize {
        self.mlp_w1.ncols()
    }

    pub fn n_types(&self) -> usize {
        self.interactions.dim().0
    }

    pub fn shapes(&self) -> [Vec<usize>; 9] {
        [
            self.w0.shape().to_vec(),
            self.w1.shape().to_vec(),
            self.keep_w.shape().to_vec(),
            self.keep_b.shape().to_vec(),
            self.mlp_w1.shape().to_vec(),
            self.mlp_b1.shape().to_vec(),
            self.mlp_w2.shape().to_vec(),
            self.mlp_b2.shape().to_vec(),
            self.interactions.shape().to_vec(),
        ]
    }

    /// Flat views in [`TENSOR_NAMES`] order.
    pub fn slices(&self) -> [&[f64]; 9] {
        [
            self.w0.as_slice().expect("standard layout"),
            self.w1.as_slice().expect("standard layout"),
            self.keep_w.as_slice().expect("standard layout"),
            self.keep_b.as_slice().expect("standard layout"),
            self.mlp_w1.as_slice().expect("standard layout"),
            self.mlp_b1.as_slice().expect("standard layout"),
            self.mlp_w2.as_slice().expect("standard layout"),
            self.mlp_b2.as_slice().expect("standard layout"),
            self.interactions.as_slice().expect("standard layout"),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 9] {
        [
            self.w0.as_slice_mut().expect("standard layout"),
            self.w1.as_slice_mut().expect("standard layout"),
            self.keep_w.as_slice_mut().expect("standard layout"),
            self.keep_b.as_slice_mut().expect("standard layout"),
            self.mlp_w1.as_slice_mut().expect("standard layout"),
            self.mlp_b1.as_slice_mut().expect("standard layout"),
            self.mlp_w2.as_slice_mut().expect("standard layout"),
            self.mlp_b2.as_slice_mut().expect("standard layout"),
            self.interactions.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    pub fn n_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }
}

/// All learned values plus the sampling temperature and threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct GnnsParams {
    pub weights: Weights,
    pub tau: f64,
    pub theta: f64,
}

fn glorot(rng: &mut Rng, fan_in: usize, fan_out: usize, out: &mut [f64]) {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for x in out {
        *x = rng.random_range(-a..a);
    }
}

impl GnnsParams {
    /// Glorot-uniform initialization. The keep bias starts where about
    /// twice the target number of nodes would be kept.
    pub fn init(n_nodes: usize, cfg: &GnnsConfig) -> Result<Self> {
        cfg.validate()?;
        if n_nodes == 0 {
            return Err(Error::config("cannot build a model for an empty graph"));
        }
        let (h, k, hm, t) = (cfg.hidden, cfg.embed_dim, cfg.mlp_hidden, cfg.n_types);
        let mut w = Weights::zeros(n_nodes, h, k, hm, t);
        let mut rng = rng_from_seed(derive_stream(cfg.seed, "init"));
        glorot(&mut rng, n_nodes, h, w.w0.as_slice_mut().unwrap());
        glorot(&mut rng, h, k, w.w1.as_slice_mut().unwrap());
        glorot(&mut rng, k, 1, w.keep_w.as_slice_mut().unwrap());
        glorot(&mut rng, k, hm, w.mlp_w1.as_slice_mut().unwrap());
        glorot(&mut rng, hm, t, w.mlp_w2.as_slice_mut().unwrap());
        glorot(&mut rng, k, k, w.interactions.as_slice_mut().unwrap());
        let p0 = (2.0 * cfg.size_target / n_nodes as f64).clamp(1e-3, 0.5);
        w.keep_b[0] = (p0 / (1.0 - p0)).ln();
        Ok(GnnsParams {
            weights: w,
            tau: cfg.tau,
            theta: cfg.theta,
        })
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Weights,
    v: Weights,
}

impl Adam {
    pub fn new(like: &Weights, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Weights::zeros_like(like),
            v: Weights::zeros_like(like),
        }
    }

    pub fn step(&mut self, params: &mut Weights, grads: &Weights) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let ps = params.slices_mut();
        let gs = grads.slices();
        let ms = self.m.slices_mut();
        let vs = self.v.slices_mut();
        for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}
