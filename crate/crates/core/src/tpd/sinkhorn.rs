//! Entropic optimal transport between adjacent topic levels.
//!
//! Both solvers iterate on log-scalings `log a`, `log b` so that
//! `π = diag(a) exp(−C/ε) diag(b)` is never formed from an underflowing kernel.
//! With `epsilon_scaling` enabled the solve starts at an ε on the order of the
//! cost range and halves it stage by stage down to the target, warm-starting
//! each stage from the previous dual potentials. The final stage runs at the
//! target ε, so the fixed point is unchanged.
//!
//! The row update may be over-relaxed, `log a ← (1−ω) log a + ω (log r − lse)`.
//! The column update stays exact, so column sums always match after a sweep
//! and the stopping test on the row error is unaffected. For ω in (0, 2) the
//! fixed point is the ordinary Sinkhorn one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::matrix::logsumexp;
use crate::numerics::{Matrix, Tape, Var};

const MARGINAL_SUM_TOL: f64 = 1e-12;
const EPSILON_DECAY: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Differentiation {
    /// Gradients flow through every Sinkhorn iteration.
    Unrolled,
    /// The plan is a constant; gradients only reach the cost.
    Detached,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub stop_tolerance: f64,
    pub differentiable: Differentiation,
    pub epsilon_scaling: bool,
    /// over-relaxation factor ω of the row update; 1 is plain Sinkhorn
    pub relaxation: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            max_iterations: 1000,
            stop_tolerance: 0.005,
            differentiable: Differentiation::Unrolled,
            epsilon_scaling: true,
            relaxation: 1.5,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon {} must be > 0", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.stop_tolerance > 0.0) {
            return Err(Error::invalid(format!(
                "stop_tolerance {} must be > 0",
                self.stop_tolerance
            )));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(Error::invalid(format!(
                "relaxation {} must lie in (0, 2)",
                self.relaxation
            )));
        }
        Ok(())
    }

    /// ε values of the successive stages, ending at `self.epsilon`.
    fn schedule(&self, cost: &Matrix) -> Vec<f64> {
        let mut stages = Vec::new();
        if self.epsilon_scaling {
            let (lo, hi) = cost
                .data()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
                    (lo.min(c), hi.max(c))
                });
            let mut eps = hi - lo;
            while eps > self.epsilon {
                stages.push(eps);
                eps *= EPSILON_DECAY;
            }
        }
        stages.push(self.epsilon);
        stages
    }
}

/// Row (child) and column (parent) masses of a transport problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginals {
    row: Vec<f64>,
    col: Vec<f64>,
}

impl Marginals {
    pub fn new(row: Vec<f64>, col: Vec<f64>) -> Result<Self> {
        for (name, v) in [("row", &row), ("column", &col)] {
            if v.is_empty() {
                return Err(Error::invalid(format!("empty {name} marginal")));
            }
            if let Some(i) = v.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} marginal entry {i} is {} (must be > 0)",
                    v[i]
                )));
            }
            let total: f64 = v.iter().sum();
            if (total - 1.0).abs() > MARGINAL_SUM_TOL {
                return Err(Error::invalid(format!("{name} marginal sums to {total}")));
            }
        }
        Ok(Self { row, col })
    }

    /// Uniform `1/m` rows and `1/n` columns.
    pub fn uniform(m: usize, n: usize) -> Result<Self> {
        Self::new(vec![1.0 / m as f64; m], vec![1.0 / n as f64; n])
    }

    pub fn row(&self) -> &[f64] {
        &self.row
    }

    pub fn col(&self) -> &[f64] {
        &self.col
    }
}

/// Transport plan used as the child × parent dependency matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DependencyMatrix(Matrix);

impl DependencyMatrix {
    /// Wraps an existing nonnegative matrix (e.g. loaded from a checkpoint).
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if m.data().iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::invalid("dependency entries must lie in [0, 1]"));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn num_children(&self) -> usize {
        self.0.rows()
    }

    pub fn num_parents(&self) -> usize {
        self.0.cols()
    }

    /// L1 deviations of the achieved row and column sums from `m`.
    pub fn marginal_errors(&self, m: &Marginals) -> (f64, f64) {
        let rows = self.0.row_sums();
        let cols = self.0.col_sums();
        let l1 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
        (l1(rows.data(), m.row()), l1(cols.data(), m.col()))
    }

    /// `−Σ π log π` with `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self
            .0
            .data()
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }
}

#[derive(Clone, Debug)]
pub struct SinkhornOutcome {
    pub plan: DependencyMatrix,
    /// total sweeps across all ε stages
    pub iterations: usize,
    pub converged: bool,
    pub row_error: f64,
}

fn check_cost(cost: &Matrix, m: &Marginals) -> Result<()> {
    if cost.rows() != m.row().len() || cost.cols() != m.col().len() {
        return Err(Error::shape(format!(
            "cost {:?} vs marginals ({}, {})",
            cost.shape(),
            m.row().len(),
            m.col().len()
        )));
    }
    if !cost.is_finite() {
        return Err(Error::Numeric("non-finite transport cost".into()));
    }
    Ok(())
}

/// `Σ_i |Σ_j exp(log a_i + K_ij + log b_j) − r_i|` where `K = −C/ε`.
fn row_error(neg_kernel: &Matrix, log_a: &[f64], log_b: &[f64], row: &[f64]) -> f64 {
    (0..neg_kernel.rows())
        .map(|i| {
            let mass: f64 = neg_kernel
                .row(i)
                .iter()
                .zip(log_b)
                .map(|(k, lb)| (log_a[i] + k + lb).exp())
                .sum();
            (mass - row[i]).abs()
        })
        .sum()
}

/// Solves the entropic OT problem for `cost` (children × parents).
///
/// Stops once the row-marginal L1 error after a full sweep drops below
/// `stop_tolerance`; on hitting `max_iterations` the current plan is returned
/// with `converged = false`.
pub fn sinkhorn(cost: &Matrix, marginals: &Marginals, cfg: &SinkhornConfig) -> Result<SinkhornOutcome> {
    cfg.validate()?;
    check_cost(cost, marginals)?;
    let (m, n) = cost.shape();
    let log_r: Vec<f64> = marginals.row().iter().map(|x| x.ln()).collect();
    let log_s: Vec<f64> = marginals.col().iter().map(|x| x.ln()).collect();
    let mut log_a = vec![0.0; m];
    let mut log_b = vec![0.0; n];
    let mut buf_n = vec![0.0; n];
    let mut buf_m = vec![0.0; m];

    let stages = cfg.schedule(cost);
    let omega = cfg.relaxation;
    let mut iterations = 0;
    let mut err = f64::INFINITY;
    let mut neg_kernel = Matrix::zeros(m, n);
    let mut prev_eps: Option<f64> = None;
    for (s, &eps) in stages.iter().enumerate() {
        let last = s + 1 == stages.len();
        if let Some(pe) = prev_eps {
            // keep the dual potentials ε·log a, ε·log b fixed across stages
            let ratio = pe / eps;
            log_a.iter_mut().for_each(|x| *x *= ratio);
            log_b.iter_mut().for_each(|x| *x *= ratio);
        }
        prev_eps = Some(eps);
        neg_kernel = cost.scale(-1.0 / eps);
        loop {
            if !last && iterations + 1 >= cfg.max_iterations {
                break;
            }
            iterations += 1;
            for i in 0..m {
                for ((b, k), lb) in buf_n.iter_mut().zip(neg_kernel.row(i)).zip(&log_b) {
                    *b = k + lb;
                }
                let target = log_r[i] - logsumexp(&buf_n);
                log_a[i] = if omega == 1.0 {
                    target
                } else {
                    (1.0 - omega) * log_a[i] + omega * target
                };
            }
            for j in 0..n {
                for (i, b) in buf_m.iter_mut().enumerate() {
                    *b = neg_kernel.get(i, j) + log_a[i];
                }
                log_b[j] = log_s[j] - logsumexp(&buf_m);
            }
            if log_a.iter().chain(&log_b).any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!(
                    "sinkhorn produced non-finite scalings at iteration {iterations}"
                )));
            }
            err = row_error(&neg_kernel, &log_a, &log_b, marginals.row());
            if err < cfg.stop_tolerance || iterations >= cfg.max_iterations {
                break;
            }
        }
    }

    let converged = err < cfg.stop_tolerance;
    if !converged {
        log::warn!(
            "sinkhorn stopped after {iterations} iterations with row error {err:.3e} (tolerance {})",
            cfg.stop_tolerance
        );
    }
    let mut plan = Matrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            plan.set(i, j, (log_a[i] + neg_kernel.get(i, j) + log_b[j]).exp());
        }
    }
    Ok(SinkhornOutcome {
        plan: DependencyMatrix(plan),
        iterations,
        converged,
        row_error: err,
    })
}

/// Tape-recorded solve; see [`sinkhorn_on_tape`].
#[derive(Clone, Debug)]
pub struct TapeSinkhorn {
    pub plan: Var,
    pub iterations: usize,
    pub converged: bool,
    pub row_error: f64,
}

/// Same iteration as [`sinkhorn`], recorded on `tape` so that the plan is
/// differentiable with respect to `cost` (m×n) and `log_col` (1×n, the log of
/// the column marginal). `row` is the fixed row marginal.
pub fn sinkhorn_on_tape(
    tape: &mut Tape,
    cost: Var,
    log_col: Var,
    row: &[f64],
    cfg: &SinkhornConfig,
) -> Result<TapeSinkhorn> {
    cfg.validate()?;
    let cost_value = tape.value(cost).clone();
    let (m, n) = cost_value.shape();
    if tape.value(log_col).shape() != (1, n) || row.len() != m {
        return Err(Error::shape(format!(
            "cost {:?}, log column marginal {:?}, row marginal {}",
            cost_value.shape(),
            tape.value(log_col).shape(),
            row.len()
        )));
    }
    let col: Vec<f64> = tape.value(log_col).data().iter().map(|x| x.exp()).collect();
    check_cost(&cost_value, &Marginals::new(row.to_vec(), col)?)?;

    let log_r = tape.constant(Matrix::col_vector(row.iter().map(|x| x.ln()).collect()));
    let mut log_a = tape.constant(Matrix::zeros(m, 1));
    let mut log_b = tape.constant(Matrix::zeros(1, n));

    let stages = cfg.schedule(&cost_value);
    let mut iterations = 0;
    let mut err = f64::INFINITY;
    let mut neg_kernel = cost;
    let mut prev_eps: Option<f64> = None;
    for (s, &eps) in stages.iter().enumerate() {
        let last = s + 1 == stages.len();
        if let Some(pe) = prev_eps {
            log_a = tape.scale(log_a, pe / eps);
            log_b = tape.scale(log_b, pe / eps);
        }
        prev_eps = Some(eps);
        neg_kernel = tape.scale(cost, -1.0 / eps);
        loop {
            if !last && iterations + 1 >= cfg.max_iterations {
                break;
            }
            iterations += 1;
            let lse_r = tape.lse_rows_plus(neg_kernel, log_b)?;
            let target = tape.sub(log_r, lse_r)?;
            log_a = if cfg.relaxation == 1.0 {
                target
            } else {
                let keep = tape.scale(log_a, 1.0 - cfg.relaxation);
                let step = tape.scale(target, cfg.relaxation);
                tape.add(keep, step)?
            };
            let lse_c = tape.lse_cols_plus(neg_kernel, log_a)?;
            log_b = tape.sub(log_col, lse_c)?;
            let (la, lb) = (tape.value(log_a).data(), tape.value(log_b).data());
            if la.iter().chain(lb).any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!(
                    "sinkhorn produced non-finite scalings at iteration {iterations}"
                )));
            }
            err = row_error(tape.value(neg_kernel), la, lb, row);
            if err < cfg.stop_tolerance || iterations >= cfg.max_iterations {
                break;
            }
        }
    }
    let converged = err < cfg.stop_tolerance;
    if !converged {
        log::warn!(
            "sinkhorn stopped after {iterations} iterations with row error {err:.3e} (tolerance {})",
            cfg.stop_tolerance
        );
    }
    let with_b = tape.add_row(neg_kernel, log_b)?;
    let with_ab = tape.add_col(with_b, log_a)?;
    let plan = tape.exp(with_ab);
    Ok(TapeSinkhorn {
        plan,
        iterations,
        converged,
        row_error: err,
    })
}
