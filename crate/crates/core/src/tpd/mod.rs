//! Topic dependencies between adjacent levels as entropic transport plans.

mod sinkhorn;

pub use sinkhorn::{
    sinkhorn, sinkhorn_on_tape, DependencyMatrix, Differentiation, Marginals, SinkhornConfig,
    SinkhornOutcome, TapeSinkhorn,
};

use crate::error::{Error, Result};
use crate::numerics::{pairwise_sq_dist, Matrix, Tape, Var};

/// Squared Euclidean distances between child (D×m) and parent (D×n)
/// embeddings, as an m×n cost matrix.
pub fn transport_cost(children: &Matrix, parents: &Matrix) -> Result<Matrix> {
    pairwise_sq_dist(children, parents)
}

/// `Σ C ⊙ φ`.
pub fn tpd_loss(cost: &Matrix, plan: &DependencyMatrix) -> Result<f64> {
    cost.expect_same_shape(plan.matrix(), "tpd_loss")?;
    Ok(cost
        .data()
        .iter()
        .zip(plan.matrix().data())
        .map(|(c, p)| c * p)
        .sum())
}

/// Recorded TPD term for one level pair.
#[derive(Clone, Debug)]
pub struct TapeTpd {
    pub loss: Var,
    pub cost: Var,
    pub plan: Var,
    pub iterations: usize,
    pub converged: bool,
}

/// Records cost, plan and `Σ C ⊙ φ` for one level pair on `tape`.
///
/// `children` is D×m, `parents` D×n and `log_col` the 1×n log column marginal;
/// rows carry uniform mass `1/m`. In [`Differentiation::Detached`] mode the
/// plan enters as a constant: `fixed_plan` is used when given, otherwise the
/// plan is solved from the current cost value.
pub fn tpd_loss_on_tape(
    tape: &mut Tape,
    children: Var,
    parents: Var,
    log_col: Var,
    cfg: &SinkhornConfig,
    fixed_plan: Option<&DependencyMatrix>,
) -> Result<TapeTpd> {
    let cost = tape.sq_dist(children, parents)?;
    let (m, n) = tape.value(cost).shape();
    let row = vec![1.0 / m as f64; m];
    let (plan, iterations, converged) = match cfg.differentiable {
        Differentiation::Unrolled => {
            let out = sinkhorn_on_tape(tape, cost, log_col, &row, cfg)?;
            (out.plan, out.iterations, out.converged)
        }
        Differentiation::Detached => match fixed_plan {
            Some(p) => {
                if p.matrix().shape() != (m, n) {
                    return Err(Error::shape(format!(
                        "fixed plan {:?} for cost ({m}, {n})",
                        p.matrix().shape()
                    )));
                }
                (tape.constant(p.matrix().clone()), 0, true)
            }
            None => {
                let col = tape.value(log_col).data().iter().map(|x| x.exp()).collect();
                let out = sinkhorn(tape.value(cost), &Marginals::new(row, col)?, cfg)?;
                (tape.constant(out.plan.into_matrix()), out.iterations, out.converged)
            }
        },
    };
    let weighted = tape.mul(cost, plan)?;
    let loss = tape.sum(weighted);
    Ok(TapeTpd {
        loss,
        cost,
        plan,
        iterations,
        converged,
    })
}

/// Argmax column per row; ties go to the lowest index.
pub fn parent_of(plan: &DependencyMatrix) -> Vec<usize> {
    let m = plan.matrix();
    (0..m.rows())
        .map(|i| {
            m.row(i)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &v)| {
                    if v > best.1 {
                        (j, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn dep(rows: &[Vec<f64>]) -> DependencyMatrix {
        DependencyMatrix::from_matrix(m(rows)).unwrap()
    }

    fn cfg(eps: f64) -> SinkhornConfig {
        SinkhornConfig {
            epsilon: eps,
            ..Default::default()
        }
    }

    /// Plain multiplicative Sinkhorn `a = r / (K b)`, `b = s / (Kᵀ a)` iterated
    /// to a 1e-15 fixed point. Only usable where `exp(−C/ε)` does not underflow.
    fn oracle(c: &Matrix, r: &[f64], s: &[f64], eps: f64) -> Matrix {
        let (rows, cols) = c.shape();
        let k = c.map(|x| (-x / eps).exp());
        let mut a = vec![1.0; rows];
        let mut b = vec![1.0; cols];
        for _ in 0..1_000_000 {
            for i in 0..rows {
                a[i] = r[i] / (0..cols).map(|j| k.get(i, j) * b[j]).sum::<f64>();
            }
            let old = b.clone();
            for j in 0..cols {
                b[j] = s[j] / (0..rows).map(|i| k.get(i, j) * a[i]).sum::<f64>();
            }
            if old.iter().zip(&b).all(|(x, y)| ((x - y) / y).abs() < 1e-15) {
                break;
            }
        }
        let mut plan = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                plan.set(i, j, a[i] * k.get(i, j) * b[j]);
            }
        }
        plan
    }

    fn random_cost(rng: &mut ChaCha8Rng, rows: usize, cols: usize, hi: f64) -> Matrix {
        Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(0.0..hi)).collect())
            .unwrap()
    }

    #[test]
    fn transport_cost_examples() {
        let same = m(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(transport_cost(&same, &same).unwrap().data().iter().step_by(3).all(|&x| x == 0.0));
        let c = transport_cost(&m(&[vec![0.0, 1.0]]), &m(&[vec![0.0]])).unwrap();
        assert_eq!((c.shape(), c.data()), ((2, 1), &[0.0, 1.0][..]));
        let c = transport_cost(&m(&[vec![3.0], vec![4.0]]), &m(&[vec![0.0], vec![0.0]])).unwrap();
        assert_eq!(c.item(), 25.0);
        assert!(matches!(
            transport_cost(&Matrix::zeros(2, 1), &Matrix::zeros(3, 1)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn zero_cost_gives_independent_coupling() {
        let out = sinkhorn(&Matrix::zeros(2, 2), &Marginals::uniform(2, 2).unwrap(), &cfg(0.05)).unwrap();
        assert!(out.converged);
        assert!(out.plan.matrix().data().iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn small_epsilon_concentrates_on_diagonal() {
        let c = m(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let out = sinkhorn(&c, &Marginals::uniform(2, 2).unwrap(), &cfg(0.05)).unwrap();
        let p = out.plan.matrix();
        assert!((p.get(0, 0) - 0.5).abs() < 1e-6 && (p.get(1, 1) - 0.5).abs() < 1e-6);
        assert!(p.get(0, 1) < 1e-6 && p.get(1, 0) < 1e-6);
    }

    #[test]
    fn large_epsilon_approaches_independence() {
        let c = m(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let out = sinkhorn(&c, &Marginals::uniform(2, 2).unwrap(), &cfg(100.0)).unwrap();
        // exact plan is K / (2(1 + e^{-1/100})) by symmetry, 1.25e-3 away from 1/4
        let diag = 0.5 / (1.0 + (-0.01f64).exp());
        let p = out.plan.matrix();
        assert!((p.get(0, 0) - diag).abs() < 1e-6 && (p.get(0, 1) - (0.5 - diag)).abs() < 1e-6);
        assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1.3e-3));
    }

    #[test]
    fn matches_fixed_point_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(rows, cols) in &[(2, 2), (3, 3), (2, 3)] {
            for &eps in &[0.05, 0.3, 2.0] {
                let c = random_cost(&mut rng, rows, cols, 1.0);
                let r: Vec<f64> = vec![1.0 / rows as f64; rows];
                let mut s: Vec<f64> = (0..cols).map(|_| rng.random_range(0.5..1.5)).collect();
                let z: f64 = s.iter().sum();
                s.iter_mut().for_each(|x| *x /= z);
                let tight = SinkhornConfig {
                    stop_tolerance: 1e-13,
                    max_iterations: 100_000,
                    ..cfg(eps)
                };
                let got = sinkhorn(&c, &Marginals::new(r.clone(), s.clone()).unwrap(), &tight).unwrap();
                let want = oracle(&c, &r, &s, eps);
                assert!(got.plan.matrix().max_abs_diff(&want) < 1e-6, "{rows}x{cols} eps={eps}");
            }
        }
    }

    #[test]
    fn marginals_met_on_random_costs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let (rows, cols) = (rng.random_range(2..120), rng.random_range(2..40));
            let c = random_cost(&mut rng, rows, cols, 100.0);
            let marg = Marginals::uniform(rows, cols).unwrap();
            let out = sinkhorn(&c, &marg, &cfg(0.05)).unwrap();
            assert!(out.converged);
            let (re, ce) = out.plan.marginal_errors(&marg);
            assert!(re < 0.005 && ce < 0.005, "{re} {ce}");
        }
    }

    #[test]
    fn constant_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_cost(&mut rng, 7, 4, 10.0);
        let marg = Marginals::uniform(7, 4).unwrap();
        let a = sinkhorn(&c, &marg, &cfg(0.05)).unwrap();
        let b = sinkhorn(&c.map(|x| x + 37.5), &marg, &cfg(0.05)).unwrap();
        assert!(a.plan.matrix().max_abs_diff(b.plan.matrix()) < 1e-8);
    }

    #[test]
    fn entropy_nondecreasing_in_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let c = random_cost(&mut rng, 6, 4, 1.0);
            let marg = Marginals::uniform(6, 4).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for eps in [0.01, 0.05, 0.5, 5.0] {
                let tight = SinkhornConfig {
                    stop_tolerance: 1e-10,
                    max_iterations: 100_000,
                    ..cfg(eps)
                };
                let h = sinkhorn(&c, &marg, &tight).unwrap().plan.entropy();
                assert!(h >= prev - 1e-9);
                prev = h;
            }
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(Marginals::new(vec![1.0, 0.0], vec![1.0]), Err(Error::InvalidArgument(_))));
        assert!(matches!(Marginals::new(vec![0.7, 0.7], vec![1.0]), Err(Error::InvalidArgument(_))));
        let marg = Marginals::uniform(2, 2).unwrap();
        assert!(matches!(sinkhorn(&Matrix::zeros(3, 2), &marg, &cfg(0.05)), Err(Error::Shape(_))));
        let bad = m(&[vec![0.0, f64::NAN], vec![0.0, 0.0]]);
        assert!(matches!(sinkhorn(&bad, &marg, &cfg(0.05)), Err(Error::Numeric(_))));
        assert!(matches!(sinkhorn(&Matrix::zeros(2, 2), &marg, &cfg(0.0)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn relaxation_keeps_the_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let c = random_cost(&mut rng, 30, 8, 5.0);
        let marg = Marginals::uniform(30, 8).unwrap();
        let solve = |omega: f64| {
            let tight = SinkhornConfig {
                stop_tolerance: 1e-12,
                max_iterations: 100_000,
                relaxation: omega,
                ..cfg(0.1)
            };
            sinkhorn(&c, &marg, &tight).unwrap()
        };
        let plain = solve(1.0);
        let relaxed = solve(1.5);
        assert!(plain.plan.matrix().max_abs_diff(relaxed.plan.matrix()) < 1e-10);
        assert!(relaxed.iterations < plain.iterations);
        for omega in [0.0, 2.0, f64::NAN] {
            let bad = SinkhornConfig {
                relaxation: omega,
                ..cfg(0.1)
            };
            assert!(matches!(sinkhorn(&c, &marg, &bad), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn budget_exhaustion_returns_plan() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_cost(&mut rng, 50, 20, 100.0);
        let marg = Marginals::uniform(50, 20).unwrap();
        let short = SinkhornConfig {
            max_iterations: 3,
            ..cfg(0.05)
        };
        let out = sinkhorn(&c, &marg, &short).unwrap();
        assert_eq!(out.iterations, 3);
        assert!(!out.converged);
        assert!(out.row_error >= 0.005);
    }

    #[test]
    fn tpd_loss_examples() {
        let c = m(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(tpd_loss(&Matrix::zeros(2, 2), &dep(&[vec![0.25; 2], vec![0.25; 2]])).unwrap(), 0.0);
        assert_eq!(tpd_loss(&c, &dep(&[vec![0.5, 0.0], vec![0.0, 0.5]])).unwrap(), 0.0);
        assert_eq!(tpd_loss(&c, &dep(&[vec![0.25; 2], vec![0.25; 2]])).unwrap(), 0.5);
        assert!(matches!(tpd_loss(&Matrix::zeros(3, 2), &dep(&[vec![0.5]])), Err(Error::Shape(_))));
    }

    #[test]
    fn parent_of_examples() {
        assert_eq!(parent_of(&dep(&[vec![0.5, 0.0], vec![0.0, 0.5]])), vec![0, 1]);
        assert_eq!(parent_of(&dep(&[vec![0.25, 0.25]])), vec![0]);
        assert_eq!(parent_of(&dep(&[vec![0.1, 0.4], vec![0.3, 0.2]])), vec![1, 0]);
    }

    #[test]
    fn tape_solver_matches_plain_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let c = random_cost(&mut rng, 9, 5, 50.0);
        let marg = Marginals::uniform(9, 5).unwrap();
        let plain = sinkhorn(&c, &marg, &cfg(0.05)).unwrap();
        let mut tape = Tape::new();
        let cv = tape.leaf(c);
        let ls = tape.constant(Matrix::row_vector(marg.col().iter().map(|x| x.ln()).collect()));
        let taped = sinkhorn_on_tape(&mut tape, cv, ls, marg.row(), &cfg(0.05)).unwrap();
        assert_eq!(taped.iterations, plain.iterations);
        assert!(tape.value(taped.plan).max_abs_diff(plain.plan.matrix()) < 1e-12);
    }

    fn tpd_pipeline(x: &[f64], d: usize, m: usize, s: &[f64], cfg: &SinkhornConfig) -> f64 {
        let children = Matrix::new(d, m, x[..d * m].to_vec()).unwrap();
        let parents = Matrix::new(d, s.len(), x[d * m..].to_vec()).unwrap();
        let mut tape = Tape::new();
        let cv = tape.constant(children);
        let pv = tape.constant(parents);
        let ls = tape.constant(Matrix::row_vector(s.iter().map(|v| v.ln()).collect()));
        let out = tpd_loss_on_tape(&mut tape, cv, pv, ls, cfg, None).unwrap();
        tape.value(out.loss).item()
    }

    fn tpd_gradient_error(mode: Differentiation) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (d, m, n) = (2, 3, 2);
        let x: Vec<f64> = (0..d * (m + n)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = [0.4, 0.6];
        let cfg = SinkhornConfig {
            epsilon: 0.5,
            stop_tolerance: 1e-12,
            max_iterations: 10_000,
            differentiable: mode,
            ..SinkhornConfig::default()
        };
        let mut tape = Tape::new();
        let cv = tape.leaf(Matrix::new(d, m, x[..d * m].to_vec()).unwrap());
        let pv = tape.leaf(Matrix::new(d, n, x[d * m..].to_vec()).unwrap());
        let ls = tape.constant(Matrix::row_vector(s.iter().map(|v: &f64| v.ln()).collect()));
        let out = tpd_loss_on_tape(&mut tape, cv, pv, ls, &cfg, None).unwrap();
        let g = tape.backward(out.loss).unwrap();
        let mut analytic = g.wrt(cv).unwrap().data().to_vec();
        analytic.extend_from_slice(g.wrt(pv).unwrap().data());

        let numeric = match mode {
            Differentiation::Unrolled => {
                finite_diff_grad(|p| tpd_pipeline(p, d, m, &s, &cfg), &x, 1e-5).unwrap()
            }
            // detached convention: the plan is frozen at its current value
            Differentiation::Detached => {
                let plan = tape.value(out.plan).clone();
                finite_diff_grad(
                    |p| {
                        let c = pairwise_sq_dist(
                            &Matrix::new(d, m, p[..d * m].to_vec()).unwrap(),
                            &Matrix::new(d, n, p[d * m..].to_vec()).unwrap(),
                        )
                        .unwrap();
                        c.data().iter().zip(plan.data()).map(|(a, b)| a * b).sum()
                    },
                    &x,
                    1e-5,
                )
                .unwrap()
            }
        };
        relative_error(&analytic, &numeric)
    }

    #[test]
    fn unrolled_gradient_matches_finite_differences() {
        assert!(tpd_gradient_error(Differentiation::Unrolled) < 1e-4);
    }

    #[test]
    fn detached_gradient_matches_finite_differences() {
        assert!(tpd_gradient_error(Differentiation::Detached) < 1e-4);
    }

    #[test]
    fn learnable_column_marginal_receives_gradient() {
        let mut tape = Tape::new();
        let cv = tape.constant(Matrix::from_rows(&[vec![0.0, 1.0, 0.5]]).unwrap());
        let pv = tape.constant(Matrix::from_rows(&[vec![0.2, 0.9]]).unwrap());
        let logits = tape.leaf(Matrix::row_vector(vec![0.3, -0.1]));
        let ls = tape.log_softmax_rows(logits);
        let out = tpd_loss_on_tape(&mut tape, cv, pv, ls, &cfg(0.5), None).unwrap();
        let g = tape.backward(out.loss).unwrap();
        assert!(g.wrt(logits).unwrap().data().iter().any(|&v| v.abs() > 1e-6));
    }
}
