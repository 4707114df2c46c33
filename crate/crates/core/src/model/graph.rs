//! Batched forward pass recorded on a tape.

use crate::error::{Error, Result};
use crate::model::TracoModel;
use crate::numerics::{BoundParams, Matrix, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardOptions {
    /// add `λ_b b` to the decoder logits; off for the no-CDD ablation
    pub use_bias: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self { use_bias: true }
    }
}

#[derive(Clone, Debug)]
pub struct Forward {
    /// V×K per level
    pub betas: Vec<Var>,
    /// B×K per level, top level first
    pub thetas: Vec<Var>,
    pub mean: Var,
    pub log_var: Var,
    /// batch mean of `(1/L) Σ_ℓ −xᵀ log p_ℓ`
    pub reconstruction: Var,
    /// batch mean of `KL(q ‖ N(0, I))`
    pub kl: Var,
}

impl TracoModel {
    pub fn topic_vars(&self, bound: &BoundParams) -> Vec<Var> {
        self.layout().topics.iter().map(|&id| bound.var(id)).collect()
    }

    /// 1×K log column marginal for the plan under parent level `parent`.
    pub fn log_col_marginal_on_tape(&self, tape: &mut Tape, bound: &BoundParams, parent: usize) -> Var {
        match self.layout().col_logits.get(parent) {
            Some(&id) => tape.log_softmax_rows(bound.var(id)),
            None => {
                let k = self.config().topics_per_level[parent];
                tape.constant(Matrix::filled(1, k, -(k as f64).ln()))
            }
        }
    }

    /// Records the topic-modeling terms for the B×V counts `x`.
    ///
    /// `noise` is B×K^L standard normal; `plans[ℓ]` is the children × parents
    /// plan under level ℓ used for θ propagation.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        x: &Matrix,
        noise: &Matrix,
        plans: &[Var],
        opts: ForwardOptions,
    ) -> Result<Forward> {
        let cfg = self.config();
        let levels = cfg.num_levels();
        let k_low = cfg.topics_per_level[levels - 1];
        let b = x.rows();
        if x.cols() != self.vocab_size() || noise.shape() != (b, k_low) || b == 0 {
            return Err(Error::shape(format!(
                "batch {:?} and noise {:?} for V={} and K={k_low}",
                x.shape(),
                noise.shape(),
                self.vocab_size()
            )));
        }
        if plans.len() != levels - 1 {
            return Err(Error::shape(format!("{} plans for {levels} levels", plans.len())));
        }
        let layout = self.layout();
        let xv = tape.constant(x.clone());

        let affine = |tape: &mut Tape, input: Var, (w, bias)| -> Result<Var> {
            let z = tape.matmul(input, bound.var(w))?;
            tape.add_row(z, bound.var(bias))
        };
        let h1 = affine(tape, xv, layout.fc1)?;
        let h1 = tape.softplus(h1);
        let h2 = affine(tape, h1, layout.fc2)?;
        let h2 = tape.softplus(h2);
        let mean = affine(tape, h2, layout.mean)?;
        let log_var = affine(tape, h2, layout.log_var)?;

        let half = tape.scale(log_var, 0.5);
        let std = tape.exp(half);
        let eps = tape.constant(noise.clone());
        let spread = tape.mul(std, eps)?;
        let r = tape.add(mean, spread)?;

        let mut thetas = vec![r; levels];
        thetas[levels - 1] = tape.softmax_rows(r);
        for l in (0..levels - 1).rev() {
            let k_child = tape.value(plans[l]).rows() as f64;
            let scaled = tape.scale(plans[l], k_child);
            thetas[l] = tape.matmul(thetas[l + 1], scaled)?;
        }

        let words = bound.var(layout.words);
        let mut betas = Vec::with_capacity(levels);
        let mut recon_terms = Vec::with_capacity(levels);
        for l in 0..levels {
            let dist = tape.sq_dist(words, bound.var(layout.topics[l]))?;
            let logits = tape.scale(dist, -1.0 / cfg.temperature);
            let beta = tape.softmax_rows(logits);
            betas.push(beta);

            let mut word_logits = tape.matmul_nt(thetas[l], beta)?;
            if opts.use_bias {
                let p = &self.contextual(l);
                let mask = Matrix::row_vector(p.iter().map(|&v| if v == 0.0 { 1.0 } else { 0.0 }).collect());
                let mask = tape.constant(mask);
                let pinned = tape.constant(Matrix::row_vector(p.to_vec()));
                let free = tape.mul(bound.var(layout.bias[l]), mask)?;
                let effective = tape.add(free, pinned)?;
                let weighted = tape.scale(effective, cfg.bias_weight);
                word_logits = tape.add_row(word_logits, weighted)?;
            }
            let log_p = tape.log_softmax_rows(word_logits);
            let weighted = tape.mul(xv, log_p)?;
            recon_terms.push(tape.sum(weighted));
        }
        let mut total = recon_terms[0];
        for &t in &recon_terms[1..] {
            total = tape.add(total, t)?;
        }
        let reconstruction = tape.scale(total, -1.0 / (levels as f64 * b as f64));

        // ½ Σ (σ² + μ² − 1 − log σ²), averaged over the batch
        let var = tape.exp(log_var);
        let mean_sq = tape.mul(mean, mean)?;
        let acc = tape.add(var, mean_sq)?;
        let acc = tape.sub(acc, log_var)?;
        let acc = tape.sum(acc);
        let acc = tape.add_scalar(acc, -((b * k_low) as f64));
        let kl = tape.scale(acc, 0.5 / b as f64);

        Ok(Forward {
            betas,
            thetas,
            mean,
            log_var,
            reconstruction,
            kl,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{decode_level, encode, propagate_theta, reparameterize, tm_loss, HierarchyConfig};
    use crate::numerics::{finite_diff_grad, relative_error};
    use crate::tpd::{sinkhorn, transport_cost, DependencyMatrix, SinkhornConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> HierarchyConfig {
        HierarchyConfig {
            topics_per_level: vec![2, 4],
            embedding_dim: 8,
            hidden_dim: 6,
            n_top: 3,
            ..Default::default()
        }
    }

    fn batch(rng: &mut ChaCha8Rng, b: usize, v: usize) -> Matrix {
        Matrix::new(b, v, (0..b * v).map(|_| rng.random_range(0..3) as f64).collect()).unwrap()
    }

    fn noise(rng: &mut ChaCha8Rng, b: usize, k: usize) -> Matrix {
        Matrix::new(b, k, (0..b * k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn plan(model: &TracoModel) -> DependencyMatrix {
        let cost = transport_cost(model.topic_embeddings(1), model.topic_embeddings(0)).unwrap();
        sinkhorn(&cost, &model.marginals(0).unwrap(), &SinkhornConfig::default()).unwrap().plan
    }

    fn tm_value(model: &TracoModel, x: &Matrix, z: &Matrix, phi: &DependencyMatrix, opts: ForwardOptions) -> f64 {
        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape);
        let pv = tape.constant(phi.matrix().clone());
        let f = model.forward(&mut tape, &bound, x, z, &[pv], opts).unwrap();
        tape.value(f.reconstruction).item() + tape.value(f.kl).item()
    }

    #[test]
    fn batched_forward_matches_single_document_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = TracoModel::new(tiny(), 30, 7).unwrap();
        let x = batch(&mut rng, 3, 30);
        let z = noise(&mut rng, 3, 4);
        let phi = plan(&model);
        let got = tm_value(&model, &x, &z, &phi, ForwardOptions::default());

        let betas = model.betas().unwrap();
        let mut want = 0.0;
        for d in 0..3 {
            let q = encode(x.row(d), &model.encoder()).unwrap();
            let r = reparameterize(&q, z.row(d)).unwrap();
            let lowest = crate::model::doc_topic_lowest(&r).unwrap();
            let thetas = propagate_theta(&lowest, std::slice::from_ref(&phi)).unwrap();
            let decoded: Vec<Vec<f64>> = (0..2)
                .map(|l| {
                    let bias = crate::model::apply_bias(model.bias(l), model.contextual(l)).unwrap();
                    decode_level(&betas[l], &thetas[l], &bias.values, 5.0).unwrap()
                })
                .collect();
            want += tm_loss(x.row(d), &decoded, &q).unwrap() / 3.0;
        }
        assert!((got - want).abs() < 1e-10 * want.abs());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut model = TracoModel::new(tiny(), 30, 8).unwrap();
        // move free bias coordinates off zero so their gradient is exercised
        for l in 0..2 {
            let p = model.contextual(l).to_vec();
            let id = model.layout().bias[l];
            for (b, p) in model.params_mut().get_mut(id).data_mut().iter_mut().zip(&p) {
                if *p == 0.0 {
                    *b = rng.random_range(-0.1..0.1);
                }
            }
        }
        let x = batch(&mut rng, 4, 30);
        let z = noise(&mut rng, 4, 4);
        let phi = plan(&model);
        let opts = ForwardOptions::default();

        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape);
        let pv = tape.constant(phi.matrix().clone());
        let f = model.forward(&mut tape, &bound, &x, &z, &[pv], opts).unwrap();
        let loss = tape.add(f.reconstruction, f.kl).unwrap();
        let grads = tape.backward(loss).unwrap();
        let analytic: Vec<f64> = bound
            .gradients(model.params(), &grads)
            .iter()
            .flat_map(|m| m.data().to_vec())
            .collect();

        let base = model.params().flatten();
        let mut probe = model.clone();
        let numeric = finite_diff_grad(
            |p| {
                probe.params_mut().unflatten(p).unwrap();
                tm_value(&probe, &x, &z, &phi, opts)
            },
            &base,
            1e-6,
        )
        .unwrap();
        assert!(relative_error(&analytic, &numeric) < 1e-4);

        // pinned bias coordinates get no gradient
        let bias_grad = &bound.gradients(model.params(), &grads)[model.layout().bias[0].index()];
        for (g, p) in bias_grad.data().iter().zip(model.contextual(0)) {
            if *p != 0.0 {
                assert_eq!(*g, 0.0);
            }
        }
    }

    #[test]
    fn disabling_bias_drops_the_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = TracoModel::new(tiny(), 30, 9).unwrap();
        let x = batch(&mut rng, 2, 30);
        let z = noise(&mut rng, 2, 4);
        let phi = plan(&model);
        let off = tm_value(&model, &x, &z, &phi, ForwardOptions { use_bias: false });
        let zero_weight = TracoModel::from_params(
            HierarchyConfig { bias_weight: 0.0, ..tiny() },
            30,
            model.params().clone(),
        )
        .unwrap();
        let on = tm_value(&zero_weight, &x, &z, &phi, ForwardOptions::default());
        assert!((off - on).abs() < 1e-12);
    }
}
