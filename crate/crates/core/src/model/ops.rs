//! Single-document forms of the model operations. Training records the same
//! arithmetic batched on a tape (see `graph`); these are used for evaluation
//! and as references in tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::matrix::{logsumexp, softmax_in_place};
use crate::numerics::{pairwise_sq_dist, softmax_stable, Matrix};
use crate::tpd::DependencyMatrix;

/// β for one level: V×K, each row (word) a distribution over the level's topics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicWordDist(Matrix);

impl TopicWordDist {
    pub fn from_matrix(m: Matrix) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn num_words(&self) -> usize {
        self.0.rows()
    }

    pub fn num_topics(&self) -> usize {
        self.0.cols()
    }

    /// Word weights of topic `k` (length V).
    pub fn topic(&self, k: usize) -> Vec<f64> {
        self.0.col(k)
    }
}

/// `β_{ik} ∝ exp(−‖t_k − w_i‖² / τ)`, normalized over topics for each word.
pub fn compute_beta(topics: &Matrix, words: &Matrix, temperature: f64) -> Result<TopicWordDist> {
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("temperature {temperature} must be > 0")));
    }
    let mut m = pairwise_sq_dist(words, topics)?;
    let k = m.cols();
    for row in m.data_mut().chunks_mut(k) {
        row.iter_mut().for_each(|d| *d /= -temperature);
        softmax_in_place(row);
    }
    Ok(TopicWordDist(m))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

/// Borrowed encoder weights: two softplus layers, then mean and log-variance heads.
/// Weight matrices are fan_in × fan_out, biases 1 × fan_out.
#[derive(Clone, Copy, Debug)]
pub struct EncoderView<'a> {
    pub fc1: (&'a Matrix, &'a Matrix),
    pub fc2: (&'a Matrix, &'a Matrix),
    pub mean: (&'a Matrix, &'a Matrix),
    pub log_var: (&'a Matrix, &'a Matrix),
}

fn affine(x: &Matrix, (w, b): (&Matrix, &Matrix)) -> Result<Matrix> {
    let mut out = x.matmul(w)?;
    if b.shape() != (1, out.cols()) {
        return Err(Error::shape(format!("bias {:?} for output {:?}", b.shape(), out.shape())));
    }
    let n = out.cols();
    for row in out.data_mut().chunks_mut(n) {
        row.iter_mut().zip(b.data()).for_each(|(o, b)| *o += b);
    }
    Ok(out)
}

impl EncoderView<'_> {
    pub fn input_dim(&self) -> usize {
        self.fc1.0.rows()
    }

    /// Posterior parameters for every row of the B×V count matrix.
    pub fn forward_batch(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} columns, encoder expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let h1 = affine(x, self.fc1)?.map(crate::numerics::tape::softplus);
        let h2 = affine(&h1, self.fc2)?.map(crate::numerics::tape::softplus);
        Ok((affine(&h2, self.mean)?, affine(&h2, self.log_var)?))
    }
}

pub fn encode(x: &[f64], encoder: &EncoderView<'_>) -> Result<GaussianPosterior> {
    let (mean, log_var) = encoder.forward_batch(&Matrix::row_vector(x.to_vec()))?;
    Ok(GaussianPosterior {
        mean: mean.into_data(),
        log_var: log_var.into_data(),
    })
}

/// `μ + exp(½ log σ²) ⊙ noise`.
pub fn reparameterize(q: &GaussianPosterior, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != q.mean.len() || q.log_var.len() != q.mean.len() {
        return Err(Error::shape(format!(
            "posterior of length {} with noise of length {}",
            q.mean.len(),
            noise.len()
        )));
    }
    Ok(q.mean
        .iter()
        .zip(&q.log_var)
        .zip(noise)
        .map(|((m, lv), z)| m + (0.5 * lv).exp() * z)
        .collect())
}

pub fn doc_topic_lowest(r: &[f64]) -> Result<Vec<f64>> {
    softmax_stable(r)
}

/// θ for every level, top level first, from the lowest-level θ.
///
/// `plans[ℓ]` is the children × parents plan between levels ℓ and ℓ+1
/// (0-based), and `θ^ℓ = (K^{ℓ+1} φ^ℓ)ᵀ θ^{ℓ+1}`.
pub fn propagate_theta(lowest: &[f64], plans: &[DependencyMatrix]) -> Result<Vec<Vec<f64>>> {
    let mut thetas = vec![lowest.to_vec()];
    for plan in plans.iter().rev() {
        let child = thetas.last().unwrap();
        let phi = plan.matrix();
        if phi.rows() != child.len() {
            return Err(Error::shape(format!(
                "plan {:?} applied to θ of length {}",
                phi.shape(),
                child.len()
            )));
        }
        let k = phi.rows() as f64;
        let mut parent = vec![0.0; phi.cols()];
        for (i, &t) in child.iter().enumerate() {
            for (p, &f) in parent.iter_mut().zip(phi.row(i)) {
                *p += k * f * t;
            }
        }
        thetas.push(parent);
    }
    thetas.reverse();
    Ok(thetas)
}

/// Levels whose topics feed the bias of `level`: both neighbours, or the single
/// neighbour at the top and bottom of the hierarchy.
pub fn contextual_levels(level: usize, num_levels: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(2);
    if level > 0 {
        out.push(level - 1);
    }
    if level + 1 < num_levels {
        out.push(level + 1);
    }
    out
}

/// Indices of the `n` largest entries; ties at the cutoff keep the lower index.
pub fn top_indices(values: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

/// Sum over the given levels and their topics of each topic's top-`n_top`
/// word weights, all other words zero.
pub fn contextual_semantics(levels: &[&TopicWordDist], n_top: usize) -> Result<Vec<f64>> {
    if n_top < 1 {
        return Err(Error::invalid("n_top must be at least 1"));
    }
    let Some(first) = levels.first() else {
        return Err(Error::invalid("no contextual levels"));
    };
    let v = first.num_words();
    let mut p = vec![0.0; v];
    for beta in levels {
        if beta.num_words() != v {
            return Err(Error::shape(format!(
                "contextual levels over {} and {} words",
                v,
                beta.num_words()
            )));
        }
        for k in 0..beta.num_topics() {
            let col = beta.topic(k);
            for i in top_indices(&col, n_top) {
                p[i] += col[i];
            }
        }
    }
    Ok(p)
}

/// Bias with coordinates pinned to the contextual semantics where those are
/// nonzero; `free[i]` marks trainable coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextualBias {
    pub values: Vec<f64>,
    pub free: Vec<bool>,
}

pub fn apply_bias(b: &[f64], p: &[f64]) -> Result<ContextualBias> {
    if b.len() != p.len() {
        return Err(Error::shape(format!("bias of length {} vs p of length {}", b.len(), p.len())));
    }
    let free: Vec<bool> = p.iter().map(|&x| x == 0.0).collect();
    let values = b
        .iter()
        .zip(p)
        .zip(&free)
        .map(|((&b, &p), &f)| if f { b } else { p })
        .collect();
    Ok(ContextualBias { values, free })
}

/// `log softmax(β θ + λ_b b)` over the vocabulary.
pub fn decode_level(beta: &TopicWordDist, theta: &[f64], bias: &[f64], bias_weight: f64) -> Result<Vec<f64>> {
    let (v, k) = beta.matrix().shape();
    if theta.len() != k || bias.len() != v {
        return Err(Error::shape(format!(
            "β {:?} with θ of length {} and bias of length {}",
            (v, k),
            theta.len(),
            bias.len()
        )));
    }
    let logits: Vec<f64> = (0..v)
        .map(|i| {
            beta.matrix().row(i).iter().zip(theta).map(|(b, t)| b * t).sum::<f64>()
                + bias_weight * bias[i]
        })
        .collect();
    let lse = logsumexp(&logits);
    Ok(logits.into_iter().map(|l| l - lse).collect())
}

/// `KL(N(μ, diag σ²) ‖ N(μ₀, diag σ₀²))`.
pub fn kl_diag_gaussian(q: &GaussianPosterior, prior_mean: &[f64], prior_var: &[f64]) -> Result<f64> {
    let n = q.mean.len();
    if q.log_var.len() != n || prior_mean.len() != n || prior_var.len() != n {
        return Err(Error::shape("posterior and prior lengths differ"));
    }
    if let Some(v) = prior_var.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::invalid(format!("prior variance {v} must be > 0")));
    }
    let kl: f64 = (0..n)
        .map(|i| {
            let var = q.log_var[i].exp();
            let diff = q.mean[i] - prior_mean[i];
            (var + diff * diff) / prior_var[i] - 1.0 + prior_var[i].ln() - q.log_var[i]
        })
        .sum();
    Ok(0.5 * kl)
}

/// `(1/L) Σ_ℓ −xᵀ log p_ℓ + KL(q ‖ N(0, I))` for per-level log-probabilities `decoded`.
pub fn tm_loss(x: &[f64], decoded: &[Vec<f64>], q: &GaussianPosterior) -> Result<f64> {
    if decoded.is_empty() {
        return Err(Error::invalid("no decoded levels"));
    }
    let mut recon = 0.0;
    for logp in decoded {
        if logp.len() != x.len() {
            return Err(Error::shape(format!(
                "decoded length {} vs document length {}",
                logp.len(),
                x.len()
            )));
        }
        recon -= x.iter().zip(logp).map(|(a, b)| if *a == 0.0 { 0.0 } else { a * b }).sum::<f64>();
    }
    let k = q.mean.len();
    let kl = kl_diag_gaussian(q, &vec![0.0; k], &vec![1.0; k])?;
    let loss = recon / decoded.len() as f64 + kl;
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite topic modeling loss".into()));
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn beta_from_topics(cols: &[Vec<f64>]) -> TopicWordDist {
        let v = cols[0].len();
        let mut m = Matrix::zeros(v, cols.len());
        for (k, c) in cols.iter().enumerate() {
            for (i, &x) in c.iter().enumerate() {
                m.set(i, k, x);
            }
        }
        TopicWordDist::from_matrix(m)
    }

    #[test]
    fn beta_single_topic_is_all_ones() {
        let b = compute_beta(&Matrix::zeros(3, 1), &Matrix::filled(3, 4, 0.7), 0.1).unwrap();
        assert!(b.matrix().data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn beta_equidistant_word() {
        let topics = Matrix::from_rows(&[vec![-1.0, 1.0]]).unwrap();
        let b = compute_beta(&topics, &Matrix::zeros(1, 1), 0.1).unwrap();
        assert_eq!(b.matrix().data(), &[0.5, 0.5]);
    }

    #[test]
    fn beta_hand_value() {
        let topics = Matrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let b = compute_beta(&topics, &Matrix::zeros(1, 1), 0.1).unwrap();
        let want = 1.0 / (1.0 + (-10.0f64).exp());
        assert!((b.matrix().get(0, 0) - want).abs() < 1e-15);
        assert!((want - 0.9999546).abs() < 1e-7);
    }

    #[test]
    fn beta_rejects_nonpositive_temperature() {
        let r = compute_beta(&Matrix::zeros(1, 1), &Matrix::zeros(1, 1), 0.0);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    fn encoder_mats(v: usize, h: usize, k: usize, fill: f64) -> Vec<Matrix> {
        vec![
            Matrix::filled(v, h, fill),
            Matrix::filled(1, h, fill),
            Matrix::filled(h, h, fill),
            Matrix::filled(1, h, fill),
            Matrix::filled(h, k, fill),
            Matrix::filled(1, k, fill),
            Matrix::filled(h, k, fill),
            Matrix::filled(1, k, fill),
        ]
    }

    fn view(m: &[Matrix]) -> EncoderView<'_> {
        EncoderView {
            fc1: (&m[0], &m[1]),
            fc2: (&m[2], &m[3]),
            mean: (&m[4], &m[5]),
            log_var: (&m[6], &m[7]),
        }
    }

    #[test]
    fn zero_encoder_gives_standard_posterior() {
        let m = encoder_mats(5, 4, 3, 0.0);
        let q = encode(&[1.0, 0.0, 2.0, 0.0, 1.0], &view(&m)).unwrap();
        assert_eq!(q.mean, vec![0.0; 3]);
        assert_eq!(q.log_var, vec![0.0; 3]);
    }

    #[test]
    fn encoder_shapes_and_determinism() {
        let m = encoder_mats(5, 4, 3, 0.1);
        let x = [1.0, 0.0, 2.0, 0.0, 1.0];
        let a = encode(&x, &view(&m)).unwrap();
        assert_eq!((a.mean.len(), a.log_var.len()), (3, 3));
        assert_eq!(a, encode(&x, &view(&m)).unwrap());
        assert!(matches!(encode(&[1.0], &view(&m)), Err(Error::Shape(_))));
    }

    #[test]
    fn reparameterize_examples() {
        let q = GaussianPosterior { mean: vec![1.0], log_var: vec![4f64.ln()] };
        assert!((reparameterize(&q, &[0.5]).unwrap()[0] - 2.0).abs() < 1e-15);
        assert_eq!(reparameterize(&q, &[0.0]).unwrap(), vec![1.0]);
        let std = GaussianPosterior { mean: vec![0.0; 2], log_var: vec![0.0; 2] };
        assert_eq!(reparameterize(&std, &[0.3, -1.2]).unwrap(), vec![0.3, -1.2]);
    }

    #[test]
    fn lowest_level_softmax() {
        assert_eq!(doc_topic_lowest(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let t = doc_topic_lowest(&[2f64.ln(), 0.0]).unwrap();
        assert!((t[0] - 2.0 / 3.0).abs() < 1e-15 && (t[1] - 1.0 / 3.0).abs() < 1e-15);
        let t = doc_topic_lowest(&[800.0, -800.0]).unwrap();
        assert!((t[0] - 1.0).abs() < 1e-15 && t[1] < 1e-300);
    }

    fn dep(rows: &[Vec<f64>]) -> DependencyMatrix {
        DependencyMatrix::from_matrix(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn propagate_examples() {
        let lowest = [0.4, 0.3, 0.2, 0.1];
        let uniform = dep(&vec![vec![0.125; 2]; 4]);
        let t = propagate_theta(&lowest, &[uniform]).unwrap();
        assert!((t[0][0] - 0.5).abs() < 1e-15 && (t[0][1] - 0.5).abs() < 1e-15);
        assert_eq!(t[1], lowest);

        let block = dep(&[vec![0.25, 0.0], vec![0.0, 0.25], vec![0.25, 0.0], vec![0.0, 0.25]]);
        let t = propagate_theta(&lowest, &[block.clone()]).unwrap();
        assert!((t[0][0] - 0.6).abs() < 1e-15 && (t[0][1] - 0.4).abs() < 1e-15);

        let t = propagate_theta(&[0.0, 0.0, 1.0, 0.0], &[block]).unwrap();
        assert_eq!(t[0], vec![1.0, 0.0]);

        assert!(matches!(propagate_theta(&[1.0], &[uniform_3x2()]), Err(Error::Shape(_))));
    }

    fn uniform_3x2() -> DependencyMatrix {
        dep(&vec![vec![1.0 / 6.0; 2]; 3])
    }

    #[test]
    fn propagate_three_levels() {
        // 1 → 2 → 4 topics, each child fully attached to one parent
        let lower = dep(&[vec![0.25, 0.0], vec![0.25, 0.0], vec![0.0, 0.25], vec![0.0, 0.25]]);
        let upper = dep(&[vec![0.5], vec![0.5]]);
        let t = propagate_theta(&[0.1, 0.2, 0.3, 0.4], &[upper, lower]).unwrap();
        assert_eq!(t.len(), 3);
        assert!((t[1][0] - 0.3).abs() < 1e-15 && (t[1][1] - 0.7).abs() < 1e-15);
        assert!((t[0][0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn contextual_level_rule() {
        assert_eq!(contextual_levels(0, 2), vec![1]);
        assert_eq!(contextual_levels(1, 2), vec![0]);
        assert_eq!(contextual_levels(1, 3), vec![0, 2]);
        assert_eq!(contextual_levels(2, 3), vec![1]);
    }

    #[test]
    fn contextual_semantics_examples() {
        let one = beta_from_topics(&[vec![0.5, 0.3, 0.2]]);
        assert_eq!(contextual_semantics(&[&one], 2).unwrap(), vec![0.5, 0.3, 0.0]);
        assert_eq!(contextual_semantics(&[&one], 5).unwrap(), vec![0.5, 0.3, 0.2]);
        let two = beta_from_topics(&[vec![0.5, 0.3, 0.2], vec![0.1, 0.2, 0.7]]);
        assert_eq!(contextual_semantics(&[&two], 1).unwrap(), vec![0.5, 0.0, 0.7]);
        assert_eq!(contextual_semantics(&[&one, &two], 1).unwrap(), vec![1.0, 0.0, 0.7]);
        assert!(matches!(contextual_semantics(&[&one], 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn top_indices_tie_keeps_lower_id() {
        assert_eq!(top_indices(&[0.2, 0.5, 0.2, 0.2], 2), vec![1, 0]);
        assert_eq!(top_indices(&[0.2, 0.5, 0.2, 0.2], 3), vec![1, 0, 2]);
    }

    #[test]
    fn apply_bias_examples() {
        let b = apply_bias(&[0.1, -0.2, 0.7], &[0.5, 0.3, 0.0]).unwrap();
        assert_eq!(b.values, vec![0.5, 0.3, 0.7]);
        assert_eq!(b.free, vec![false, false, true]);
        let b = apply_bias(&[0.1, -0.2], &[0.0, 0.0]).unwrap();
        assert_eq!(b.values, vec![0.1, -0.2]);
        assert!(b.free.iter().all(|&f| f));
    }

    #[test]
    fn decode_examples() {
        let beta = beta_from_topics(&[vec![0.9, 0.5, 0.1], vec![0.1, 0.5, 0.9]]);
        let theta = [0.3, 0.7];
        let plain = decode_level(&beta, &theta, &[1.0, 2.0, 3.0], 0.0).unwrap();
        let logits: Vec<f64> = (0..3).map(|i| 0.3 * beta.topic(0)[i] + 0.7 * beta.topic(1)[i]).collect();
        let lse = logsumexp(&logits);
        for (p, l) in plain.iter().zip(&logits) {
            assert!((p - (l - lse)).abs() < 1e-15);
        }
        let b = [0.2, -0.1, 0.4];
        let one_hot = decode_level(&beta, &[1.0, 0.0], &b, 5.0).unwrap();
        let logits: Vec<f64> = (0..3).map(|i| beta.topic(0)[i] + 5.0 * b[i]).collect();
        let lse = logsumexp(&logits);
        for (p, l) in one_hot.iter().zip(&logits) {
            assert!((p - (l - lse)).abs() < 1e-14);
        }
    }

    #[test]
    fn kl_examples() {
        let q = GaussianPosterior { mean: vec![1.0, 0.0], log_var: vec![0.0, 0.0] };
        assert!((kl_diag_gaussian(&q, &[0.0, 0.0], &[1.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        let q = GaussianPosterior { mean: vec![0.3, -2.0], log_var: vec![2f64.ln(), 0.5f64.ln()] };
        let same = kl_diag_gaussian(&q, &[0.3, -2.0], &[2.0, 0.5]).unwrap();
        assert!(same.abs() < 1e-15);
        assert!(matches!(kl_diag_gaussian(&q, &[0.0; 2], &[1.0, 0.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn tm_loss_examples() {
        let q = GaussianPosterior { mean: vec![0.0], log_var: vec![0.0] };
        let half = 0.5f64.ln();
        let l = tm_loss(&[1.0, 1.0], &[vec![half, half]], &q).unwrap();
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-15);
        let q1 = GaussianPosterior { mean: vec![1.0, 0.0], log_var: vec![0.0, 0.0] };
        assert!((tm_loss(&[0.0, 0.0], &[vec![half, half]], &q1).unwrap() - 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn beta_rows_normalized(seed in 0u64..1000, v in 1usize..12, k in 1usize..6, d in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rand_m = |r, c| Matrix::new(r, c, (0..r * c).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
            let b = compute_beta(&rand_m(d, k), &rand_m(d, v), 0.1).unwrap();
            for i in 0..v {
                let s: f64 = b.matrix().row(i).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn decode_normalized_and_shift_invariant(seed in 0u64..1000, v in 2usize..20, k in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let beta = TopicWordDist::from_matrix(
                Matrix::new(v, k, (0..v * k).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap());
            let theta = softmax_stable(&(0..k).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>()).unwrap();
            let b: Vec<f64> = (0..v).map(|_| rng.random_range(-1.0..1.0)).collect();
            let out = decode_level(&beta, &theta, &b, 5.0).unwrap();
            prop_assert!((out.iter().map(|x| x.exp()).sum::<f64>() - 1.0).abs() < 1e-10);
            let shifted: Vec<f64> = b.iter().map(|x| x + 0.37).collect();
            let out2 = decode_level(&beta, &theta, &shifted, 5.0).unwrap();
            for (a, c) in out.iter().zip(&out2) {
                prop_assert!((a - c).abs() < 1e-12);
            }
        }

        #[test]
        fn kl_nonnegative(mu in prop::collection::vec(-3.0f64..3.0, 1..6), seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = mu.len();
            let lv: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let pm: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let pv: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
            let q = GaussianPosterior { mean: mu, log_var: lv };
            prop_assert!(kl_diag_gaussian(&q, &pm, &pv).unwrap() >= -1e-12);
        }

        #[test]
        fn propagated_theta_sums_to_one(seed in 0u64..500, k1 in 1usize..6, k2 in 1usize..10) {
            use crate::tpd::{sinkhorn, Marginals, SinkhornConfig};
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = Matrix::new(k2, k1, (0..k1 * k2).map(|_| rng.random_range(0.0..5.0)).collect()).unwrap();
            let plan = sinkhorn(&c, &Marginals::uniform(k2, k1).unwrap(), &SinkhornConfig::default()).unwrap().plan;
            let lowest = softmax_stable(&(0..k2).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<_>>()).unwrap();
            let t = propagate_theta(&lowest, &[plan]).unwrap();
            prop_assert!(t[0].iter().all(|&x| x >= 0.0));
            prop_assert!((t[0].iter().sum::<f64>() - 1.0).abs() < 0.05);
        }
    }
}
