//! Topic-word distributions, the VAE encoder, doc-topic propagation, the
//! context-aware bias and per-level decoding.

mod graph;
mod ops;

pub use graph::{Forward, ForwardOptions};
pub use ops::{
    apply_bias, compute_beta, contextual_levels, contextual_semantics, decode_level,
    doc_topic_lowest, encode, kl_diag_gaussian, propagate_theta, reparameterize, tm_loss,
    top_indices, ContextualBias, EncoderView, GaussianPosterior, TopicWordDist,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{softmax_stable, Matrix, ParamId, ParamStore};
use crate::tpd::{DependencyMatrix, Marginals};

const EMBEDDING_INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HierarchyConfig {
    /// topics per level, top level first
    pub topics_per_level: Vec<usize>,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    /// τ in the topic-word softmax
    pub temperature: f64,
    pub n_top: usize,
    /// λ_b
    pub bias_weight: f64,
    /// learn each parent level's column marginal through softmax logits
    /// instead of keeping it uniform
    pub learn_column_marginals: bool,
    /// recompute the contextual semantics every this many optimizer steps
    pub bias_refresh_interval: usize,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            topics_per_level: vec![10, 50, 200],
            embedding_dim: 128,
            hidden_dim: 256,
            temperature: 0.1,
            n_top: 20,
            bias_weight: 5.0,
            learn_column_marginals: false,
            bias_refresh_interval: 1,
        }
    }
}

impl HierarchyConfig {
    pub fn num_levels(&self) -> usize {
        self.topics_per_level.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.topics_per_level.len() < 2 {
            return bad(format!("need at least 2 levels, got {}", self.topics_per_level.len()));
        }
        if self.topics_per_level.contains(&0) {
            return bad("every level needs at least one topic".into());
        }
        if self.embedding_dim == 0 || self.hidden_dim == 0 {
            return bad("embedding_dim and hidden_dim must be positive".into());
        }
        if !(self.temperature > 0.0) {
            return bad(format!("temperature {} must be > 0", self.temperature));
        }
        if self.n_top == 0 {
            return bad("n_top must be at least 1".into());
        }
        if !(self.bias_weight >= 0.0) {
            return bad(format!("bias_weight {} must be >= 0", self.bias_weight));
        }
        if self.bias_refresh_interval == 0 {
            return bad("bias_refresh_interval must be at least 1".into());
        }
        if self.topics_per_level.windows(2).any(|w| w[0] > w[1]) {
            log::warn!("topic counts {:?} shrink toward the leaves", self.topics_per_level);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Layout {
    pub fc1: (ParamId, ParamId),
    pub fc2: (ParamId, ParamId),
    pub mean: (ParamId, ParamId),
    pub log_var: (ParamId, ParamId),
    pub words: ParamId,
    pub topics: Vec<ParamId>,
    pub bias: Vec<ParamId>,
    /// per parent level (0..L−1) when column marginals are learned
    pub col_logits: Vec<ParamId>,
}

/// Model parameters plus the current contextual semantics per level.
#[derive(Clone, Debug, PartialEq)]
pub struct TracoModel {
    config: HierarchyConfig,
    vocab_size: usize,
    params: ParamStore,
    layout: Layout,
    contextual: Vec<Vec<f64>>,
}

/// Expected parameter names and shapes, in registration order.
fn param_specs(cfg: &HierarchyConfig, v: usize) -> Vec<(String, (usize, usize))> {
    let (h, d) = (cfg.hidden_dim, cfg.embedding_dim);
    let k_low = *cfg.topics_per_level.last().unwrap();
    let mut specs = vec![
        ("encoder.fc1.weight".to_string(), (v, h)),
        ("encoder.fc1.bias".to_string(), (1, h)),
        ("encoder.fc2.weight".to_string(), (h, h)),
        ("encoder.fc2.bias".to_string(), (1, h)),
        ("encoder.mean.weight".to_string(), (h, k_low)),
        ("encoder.mean.bias".to_string(), (1, k_low)),
        ("encoder.log_var.weight".to_string(), (h, k_low)),
        ("encoder.log_var.bias".to_string(), (1, k_low)),
        ("word_embeddings".to_string(), (d, v)),
    ];
    for (l, &k) in cfg.topics_per_level.iter().enumerate() {
        specs.push((format!("topic_embeddings.{l}"), (d, k)));
    }
    for l in 0..cfg.num_levels() {
        specs.push((format!("bias.{l}"), (1, v)));
    }
    if cfg.learn_column_marginals {
        for (l, &k) in cfg.topics_per_level[..cfg.num_levels() - 1].iter().enumerate() {
            specs.push((format!("col_logits.{l}"), (1, k)));
        }
    }
    specs
}

fn layout_of(params: &ParamStore, cfg: &HierarchyConfig) -> Layout {
    let id = |n: &str| params.id(n).expect("layout checked against specs");
    let pair = |n: &str| (id(&format!("{n}.weight")), id(&format!("{n}.bias")));
    let levels = cfg.num_levels();
    Layout {
        fc1: pair("encoder.fc1"),
        fc2: pair("encoder.fc2"),
        mean: pair("encoder.mean"),
        log_var: pair("encoder.log_var"),
        words: id("word_embeddings"),
        topics: (0..levels).map(|l| id(&format!("topic_embeddings.{l}"))).collect(),
        bias: (0..levels).map(|l| id(&format!("bias.{l}"))).collect(),
        col_logits: if cfg.learn_column_marginals {
            (0..levels - 1).map(|l| id(&format!("col_logits.{l}"))).collect()
        } else {
            Vec::new()
        },
    }
}

impl TracoModel {
    /// Fresh parameters: embeddings from N(0, 0.02²), encoder layers from
    /// U(±1/√fan_in), biases and marginal logits at zero.
    pub fn new(config: HierarchyConfig, vocab_size: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab_size == 0 {
            return Err(Error::Config("empty vocabulary".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, EMBEDDING_INIT_STD).expect("valid std");
        let mut params = ParamStore::new();
        let mut fan_in = vocab_size;
        for (name, (r, c)) in param_specs(&config, vocab_size) {
            let value = if name.starts_with("encoder.") {
                if name.ends_with(".weight") {
                    fan_in = r;
                }
                let bound = 1.0 / (fan_in as f64).sqrt();
                Matrix::new(r, c, (0..r * c).map(|_| rng.random_range(-bound..bound)).collect())?
            } else if name.contains("embeddings") {
                Matrix::new(r, c, (0..r * c).map(|_| normal.sample(&mut rng)).collect())?
            } else {
                Matrix::zeros(r, c)
            };
            params.register(name, value);
        }
        Self::from_params(config, vocab_size, params)
    }

    /// Rebuilds a model from stored parameters, checking names and shapes.
    pub fn from_params(config: HierarchyConfig, vocab_size: usize, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config, vocab_size);
        if specs.len() != params.len() {
            return Err(Error::Schema(format!(
                "expected {} parameter arrays, found {}",
                specs.len(),
                params.len()
            )));
        }
        for ((name, shape), (have, value)) in specs.iter().zip(params.names().iter().zip(params.values())) {
            if name != have || *shape != value.shape() {
                return Err(Error::Schema(format!(
                    "parameter {have} {:?} where {name} {shape:?} was expected",
                    value.shape()
                )));
            }
        }
        let layout = layout_of(&params, &config);
        let levels = config.num_levels();
        let mut model = Self {
            config,
            vocab_size,
            params,
            layout,
            contextual: vec![vec![0.0; vocab_size]; levels],
        };
        model.refresh_contextual()?;
        Ok(model)
    }

    pub fn config(&self) -> &HierarchyConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn num_levels(&self) -> usize {
        self.config.num_levels()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub(crate) fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn word_embeddings(&self) -> &Matrix {
        self.params.get(self.layout.words)
    }

    pub fn topic_embeddings(&self, level: usize) -> &Matrix {
        self.params.get(self.layout.topics[level])
    }

    pub fn bias(&self, level: usize) -> &[f64] {
        self.params.get(self.layout.bias[level]).data()
    }

    /// Contextual semantics p per level as of the last refresh.
    pub fn contextual(&self, level: usize) -> &[f64] {
        &self.contextual[level]
    }

    pub fn encoder(&self) -> EncoderView<'_> {
        let p = |(w, b): (ParamId, ParamId)| (self.params.get(w), self.params.get(b));
        EncoderView {
            fc1: p(self.layout.fc1),
            fc2: p(self.layout.fc2),
            mean: p(self.layout.mean),
            log_var: p(self.layout.log_var),
        }
    }

    pub fn beta(&self, level: usize) -> Result<TopicWordDist> {
        compute_beta(self.topic_embeddings(level), self.word_embeddings(), self.config.temperature)
    }

    pub fn betas(&self) -> Result<Vec<TopicWordDist>> {
        (0..self.num_levels()).map(|l| self.beta(l)).collect()
    }

    /// Column marginal for the plan between levels `parent` and `parent + 1`.
    pub fn marginals(&self, parent: usize) -> Result<Marginals> {
        let k = &self.config.topics_per_level;
        let (m, n) = (k[parent + 1], k[parent]);
        match self.layout.col_logits.get(parent) {
            Some(&id) => Marginals::new(vec![1.0 / m as f64; m], softmax_stable(self.params.get(id).data())?),
            None => Marginals::uniform(m, n),
        }
    }

    /// Recomputes p from the current β and pins the bias coordinates where p ≠ 0.
    pub fn refresh_contextual(&mut self) -> Result<()> {
        let betas = self.betas()?;
        let levels = self.num_levels();
        for l in 0..levels {
            let ctx: Vec<&TopicWordDist> = contextual_levels(l, levels).into_iter().map(|c| &betas[c]).collect();
            self.contextual[l] = contextual_semantics(&ctx, self.config.n_top)?;
        }
        self.clamp_bias();
        Ok(())
    }

    /// Re-applies the pinned coordinates, e.g. after an optimizer step.
    pub fn clamp_bias(&mut self) {
        for l in 0..self.num_levels() {
            let b = self.params.get_mut(self.layout.bias[l]);
            for (x, &p) in b.data_mut().iter_mut().zip(&self.contextual[l]) {
                if p != 0.0 {
                    *x = p;
                }
            }
        }
    }

    /// Evaluation-time θ for every level (each B×K, top level first) using the
    /// posterior mean without sampling.
    pub fn doc_topics(&self, x: &Matrix, plans: &[DependencyMatrix]) -> Result<Vec<Matrix>> {
        let levels = self.num_levels();
        if plans.len() != levels - 1 {
            return Err(Error::shape(format!("{} plans for {levels} levels", plans.len())));
        }
        let (mean, _) = self.encoder().forward_batch(x)?;
        let mut out = vec![Matrix::zeros(x.rows(), 0); levels];
        let mut lowest = mean;
        let k = lowest.cols();
        for row in lowest.data_mut().chunks_mut(k) {
            crate::numerics::matrix::softmax_in_place(row);
        }
        out[levels - 1] = lowest;
        for l in (0..levels - 1).rev() {
            let phi = plans[l].matrix();
            out[l] = out[l + 1].matmul(&phi.scale(phi.rows() as f64))?;
        }
        Ok(out)
    }
}
