//! Training loop: per-epoch dependency refresh, minibatch Adam steps on the
//! combined objective, checkpointing.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::BowCorpus;
use crate::error::{Error, Result};
use crate::model::{ForwardOptions, HierarchyConfig, TracoModel};
use crate::numerics::{AdamState, Matrix, Tape};
use crate::tpd::{sinkhorn, tpd_loss_on_tape, transport_cost, DependencyMatrix, Differentiation, SinkhornConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hierarchy: HierarchyConfig,
    pub sinkhorn: SinkhornConfig,
    /// λ_TPD
    pub tpd_weight: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub disable_tpd: bool,
    pub disable_cdd: bool,
    /// global gradient-norm cap; 0 disables clipping
    pub grad_clip: f64,
    /// linearly ramp the KL weight from 1/n to 1 over the first n epochs; 0 = off
    pub kl_annealing_epochs: usize,
    /// documents per batch when computing evaluation-time θ
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hierarchy: HierarchyConfig::default(),
            sinkhorn: SinkhornConfig::default(),
            tpd_weight: 20.0,
            learning_rate: 0.002,
            epochs: 200,
            batch_size: 200,
            seed: 0,
            disable_tpd: false,
            disable_cdd: false,
            grad_clip: 5.0,
            kl_annealing_epochs: 0,
            eval_batch_size: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.hierarchy.validate()?;
        self.sinkhorn.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.tpd_weight >= 0.0 && self.tpd_weight.is_finite()) {
            return Err(Error::Config(format!("tpd_weight {} must be >= 0", self.tpd_weight)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} must be > 0", self.learning_rate)));
        }
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return Err(Error::Config(format!("grad_clip {} must be >= 0", self.grad_clip)));
        }
        Ok(())
    }

    fn kl_weight(&self, epoch: usize) -> f64 {
        if self.kl_annealing_epochs == 0 {
            1.0
        } else {
            ((epoch + 1) as f64 / self.kl_annealing_epochs as f64).min(1.0)
        }
    }
}

/// `λ_TPD · mean(tpd) + mean_tm`, with the first term dropped under `disable_tpd`.
pub fn objective(tpd_losses: &[f64], mean_tm: f64, cfg: &TrainConfig) -> f64 {
    if cfg.disable_tpd || tpd_losses.is_empty() {
        return mean_tm;
    }
    cfg.tpd_weight * tpd_losses.iter().sum::<f64>() / tpd_losses.len() as f64 + mean_tm
}

/// Solves every adjacent level pair from the current embeddings.
pub fn refresh_plans(model: &TracoModel, cfg: &SinkhornConfig) -> Result<Vec<DependencyMatrix>> {
    (0..model.num_levels() - 1)
        .map(|l| {
            let cost = transport_cost(model.topic_embeddings(l + 1), model.topic_embeddings(l))?;
            let out = sinkhorn(&cost, &model.marginals(l)?, cfg)?;
            if !out.converged {
                log::warn!("plan under level {l} did not converge (row error {:.3e})", out.row_error);
            }
            Ok(out.plan)
        })
        .collect()
}

/// Per-step values, mostly for diagnostics and tests.
#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    pub objective: f64,
    pub reconstruction: f64,
    pub kl: f64,
    pub tpd: Vec<f64>,
    pub grad_norm: f64,
}

/// Owns the model and optimizer state of one run.
pub struct Trainer {
    cfg: TrainConfig,
    model: TracoModel,
    adam: AdamState,
    rng: ChaCha8Rng,
    plans: Vec<DependencyMatrix>,
    steps: u64,
}

impl Trainer {
    pub fn new(vocab_size: usize, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = TracoModel::new(cfg.hierarchy.clone(), vocab_size, cfg.seed)?;
        let adam = AdamState::new(model.params().shapes());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        // separate stream from the one used for initialization
        rng.set_stream(1);
        let plans = refresh_plans(&model, &cfg.sinkhorn)?;
        Ok(Self {
            cfg,
            model,
            adam,
            rng,
            plans,
            steps: 0,
        })
    }

    pub fn model(&self) -> &TracoModel {
        &self.model
    }

    /// Direct access for diagnostics; the epoch plans are not refreshed.
    pub fn model_mut(&mut self) -> &mut TracoModel {
        &mut self.model
    }

    pub fn plans(&self) -> &[DependencyMatrix] {
        &self.plans
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn refresh(&mut self) -> Result<()> {
        self.plans = refresh_plans(&self.model, &self.cfg.sinkhorn)?;
        Ok(())
    }

    /// Records the objective for one batch and returns the tape, the loss
    /// variable and the bound parameters, without updating anything.
    fn record(
        &self,
        tape: &mut Tape,
        x: &Matrix,
        noise: &Matrix,
        kl_weight: f64,
    ) -> Result<(crate::numerics::Var, crate::numerics::BoundParams, StepStats)> {
        let model = &self.model;
        let bound = model.params().bind(tape);
        let pairs = model.num_levels() - 1;
        let with_tpd = !self.cfg.disable_tpd && self.cfg.tpd_weight > 0.0;
        let unrolled = self.cfg.sinkhorn.differentiable == Differentiation::Unrolled;
        let topics = model.topic_vars(&bound);
        let mut plan_vars = Vec::with_capacity(pairs);
        let mut tpd_terms = Vec::new();
        for l in 0..pairs {
            if unrolled {
                // the plan re-solved from the current embeddings feeds both
                // θ propagation and the TPD loss
                let log_col = model.log_col_marginal_on_tape(tape, &bound, l);
                let term = tpd_loss_on_tape(tape, topics[l + 1], topics[l], log_col, &self.cfg.sinkhorn, None)?;
                plan_vars.push(term.plan);
                tpd_terms.push(term.loss);
            } else {
                plan_vars.push(tape.constant(self.plans[l].matrix().clone()));
                if with_tpd {
                    let log_col = model.log_col_marginal_on_tape(tape, &bound, l);
                    let term = tpd_loss_on_tape(
                        tape,
                        topics[l + 1],
                        topics[l],
                        log_col,
                        &self.cfg.sinkhorn,
                        Some(&self.plans[l]),
                    )?;
                    tpd_terms.push(term.loss);
                }
            }
        }
        let opts = ForwardOptions {
            use_bias: !self.cfg.disable_cdd,
        };
        let fwd = model.forward(tape, &bound, x, noise, &plan_vars, opts)?;
        let kl = tape.scale(fwd.kl, kl_weight);
        let mut loss = tape.add(fwd.reconstruction, kl)?;
        let mut tpd_values = Vec::new();
        if with_tpd {
            let mut sum = tpd_terms[0];
            tpd_values.push(tape.value(sum).item());
            for &t in &tpd_terms[1..] {
                tpd_values.push(tape.value(t).item());
                sum = tape.add(sum, t)?;
            }
            let weighted = tape.scale(sum, self.cfg.tpd_weight / pairs as f64);
            loss = tape.add(loss, weighted)?;
        }
        let stats = StepStats {
            objective: tape.value(loss).item(),
            reconstruction: tape.value(fwd.reconstruction).item(),
            kl: tape.value(fwd.kl).item(),
            tpd: tpd_values,
            grad_norm: 0.0,
        };
        Ok((loss, bound, stats))
    }

    /// Objective value for a batch under the current state (no update).
    pub fn evaluate_batch(&self, x: &Matrix, noise: &Matrix, kl_weight: f64) -> Result<StepStats> {
        let mut tape = Tape::new();
        Ok(self.record(&mut tape, x, noise, kl_weight)?.2)
    }

    /// Objective value and its gradient for every parameter array, in
    /// parameter-store order (no update).
    pub fn objective_gradients(&self, x: &Matrix, noise: &Matrix, kl_weight: f64) -> Result<(StepStats, Vec<Matrix>)> {
        let mut tape = Tape::new();
        let (loss, bound, stats) = self.record(&mut tape, x, noise, kl_weight)?;
        let grads = tape.backward(loss)?;
        Ok((stats, bound.gradients(self.model.params(), &grads)))
    }

    /// One Adam step on the batch `x` with the given reparameterization noise.
    pub fn step_with_noise(&mut self, x: &Matrix, noise: &Matrix, kl_weight: f64) -> Result<StepStats> {
        let interval = self.cfg.hierarchy.bias_refresh_interval as u64;
        if !self.cfg.disable_cdd && self.steps % interval == 0 {
            self.model.refresh_contextual()?;
        }
        let mut tape = Tape::new();
        let (loss, bound, mut stats) = self.record(&mut tape, x, noise, kl_weight)?;
        if !stats.objective.is_finite() {
            return Err(Error::Numeric(format!("objective is {}", stats.objective)));
        }
        let grads = tape.backward(loss)?;
        let mut grads = bound.gradients(self.model.params(), &grads);
        let norm = grads.iter().map(Matrix::frobenius_sq).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::Numeric(format!("gradient norm is {norm}")));
        }
        stats.grad_norm = norm;
        let clip = self.cfg.grad_clip;
        if clip > 0.0 && norm > clip {
            let s = clip / norm;
            grads = grads.iter().map(|g| g.scale(s)).collect();
        }
        self.adam
            .step(self.model.params_mut().values_mut(), &grads, self.cfg.learning_rate)?;
        self.model.clamp_bias();
        self.steps += 1;
        Ok(stats)
    }

    /// Refreshes the plans, then runs one shuffled pass over `corpus`.
    /// Returns the batch-size-weighted mean objective.
    pub fn run_epoch(&mut self, corpus: &BowCorpus, epoch: usize) -> Result<f64> {
        self.refresh().map_err(|e| with_context(e, epoch, None))?;
        let mut order: Vec<usize> = (0..corpus.num_docs()).collect();
        order.shuffle(&mut self.rng);
        let k_low = *self.cfg.hierarchy.topics_per_level.last().unwrap();
        let kl_weight = self.cfg.kl_weight(epoch);
        let mut total = 0.0;
        for (b, batch) in order.chunks(self.cfg.batch_size).enumerate() {
            let x = corpus.dense_rows(batch);
            let noise = Matrix::new(
                batch.len(),
                k_low,
                (0..batch.len() * k_low).map(|_| StandardNormal.sample(&mut self.rng)).collect(),
            )?;
            let stats = self
                .step_with_noise(&x, &noise, kl_weight)
                .map_err(|e| with_context(e, epoch, Some(b)))?;
            total += stats.objective * batch.len() as f64;
        }
        Ok(total / corpus.num_docs() as f64)
    }

    /// Final plan refresh and packaging.
    pub fn finish(mut self, loss_history: Vec<f64>) -> Result<Checkpoint> {
        self.refresh()?;
        Ok(Checkpoint {
            config: self.cfg,
            vocab_size: self.model.vocab_size(),
            vocabulary: Vec::new(),
            params: self.model.params().clone(),
            plans: self.plans,
            loss_history,
        })
    }
}

fn with_context(e: Error, epoch: usize, batch: Option<usize>) -> Error {
    let at = match batch {
        Some(b) => format!("epoch {}, batch {}", epoch + 1, b + 1),
        None => format!("epoch {}", epoch + 1),
    };
    match e {
        Error::Numeric(m) => Error::Numeric(format!("{at}: {m}")),
        other => other,
    }
}

/// Trains from scratch. `on_epoch` sees each epoch index and its mean objective.
pub fn train_with(
    corpus: &BowCorpus,
    cfg: TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Checkpoint> {
    let mut trainer = Trainer::new(corpus.vocab_size(), cfg)?;
    let epochs = trainer.config().epochs;
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let loss = trainer.run_epoch(corpus, epoch)?;
        log::debug!("epoch {:>4}  objective {loss:.4}", epoch + 1);
        on_epoch(epoch, loss);
        history.push(loss);
    }
    trainer.finish(history)
}

pub fn train(corpus: &BowCorpus, cfg: TrainConfig) -> Result<Checkpoint> {
    train_with(corpus, cfg, |_, _| {})
}

/// Evaluation-time θ per level (each N×K, top level first) for every
/// document of `corpus`.
pub fn infer_doc_topics(cp: &Checkpoint, corpus: &BowCorpus) -> Result<Vec<Matrix>> {
    if corpus.vocab_size() != cp.vocab_size {
        return Err(Error::VocabMismatch(format!(
            "corpus over {} words, checkpoint over {}",
            corpus.vocab_size(),
            cp.vocab_size
        )));
    }
    let model = cp.model()?;
    let levels = model.num_levels();
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); levels];
    let idx: Vec<usize> = (0..corpus.num_docs()).collect();
    for chunk in idx.chunks(cp.config.eval_batch_size) {
        let thetas = model.doc_topics(&corpus.dense_rows(chunk), &cp.plans)?;
        for (acc, t) in out.iter_mut().zip(thetas) {
            acc.extend_from_slice(t.data());
        }
    }
    out.into_iter()
        .zip(&cp.config.hierarchy.topics_per_level)
        .map(|(data, &k)| Matrix::new(corpus.num_docs(), k, data))
        .collect()
}
