//! Unbiased variance-reduced estimators of `S^k = G x^k - gamma_k G x^{k-1}`.
//!
//! Three interchangeable estimators: an exact full-batch evaluation, a
//! loopless SVRG estimator anchored at a snapshot point refreshed with a
//! fixed probability each iteration, and a SAGA estimator anchored at a
//! per-component table of past evaluations. Each exposes its contraction
//! constants `(rho, Theta, Theta_hat)` and the diagnostic variance bound
//! `Delta_k`.
//!
//! Conventions that the variance recursion with the exact constants relies
//! on (and that the verification suite enumerates):
//! - the SVRG snapshot switch is resolved at the *start* of iteration `k`,
//!   moving the snapshot to `x^{k-1}` with probability `p` before the batch
//!   is sampled, so the snapshot used by the draw is never stale;
//! - SAGA samples its mini-batch uniformly *without* replacement, making
//!   the per-index refresh probability exactly `b/n`;
//! - SAGA overwrites the sampled table rows with `G_i x^k` (the evaluations
//!   already paid for by the draw), so rows refreshed at iteration `k`
//!   enter the next `Delta` as `G_i x^k`.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::operators::{FiniteSumProblem, OperatorError, OracleCounter};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error("SAGA batch size {b} exceeds component count {n}")]
    BatchTooLarge { b: usize, n: usize },
    #[error("switch probability {p} outside (0, 1)")]
    BadSwitchProbability { p: f64 },
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Which estimator a solver run uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    FullBatch,
    LooplessSvrg { batch: usize, switch_prob: f64 },
    Saga { batch: usize },
}

impl EstimatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::FullBatch => "full",
            EstimatorKind::LooplessSvrg { .. } => "svrg",
            EstimatorKind::Saga { .. } => "saga",
        }
    }
}

/// Contraction factor and variance-transfer constants of an estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConstants {
    pub rho: f64,
    pub theta: f64,
    pub theta_hat: f64,
    /// True when the coarsened majorants used by the closed-form step-size
    /// plans are returned instead of the exact values.
    pub simplified: bool,
}

/// Returns `(rho, Theta, Theta_hat)` for an estimator.
///
/// Exact values: SVRG has `rho = p/2`, `Theta = (4 - 6p + 3p^2)/(bp)`,
/// `Theta_hat = 2(2 - 3p + p^2)/(bp)`; SAGA has `rho = b/(2n)`,
/// `Theta = (2(n-b)(2n+b) + b^2)/(n b^2)`, `Theta_hat = 2(n-b)(2n+b)/(n b^2)`.
/// Simplified majorants: `Theta = Theta_hat = 4/(bp)` resp. `4n/b^2`.
pub fn estimator_constants(
    kind: &EstimatorKind,
    n: usize,
    simplified: bool,
) -> EstimatorConstants {
    match *kind {
        EstimatorKind::FullBatch => {
            EstimatorConstants { rho: 1.0, theta: 0.0, theta_hat: 0.0, simplified }
        }
        EstimatorKind::LooplessSvrg { batch, switch_prob } => {
            let b = batch as f64;
            let p = switch_prob;
            let (theta, theta_hat) = if simplified {
                (4.0 / (b * p), 4.0 / (b * p))
            } else {
                ((4.0 - 6.0 * p + 3.0 * p * p) / (b * p), 2.0 * (2.0 - 3.0 * p + p * p) / (b * p))
            };
            EstimatorConstants { rho: p / 2.0, theta, theta_hat, simplified }
        }
        EstimatorKind::Saga { batch } => {
            let b = batch as f64;
            let nf = n as f64;
            let (theta, theta_hat) = if simplified {
                (4.0 * nf / (b * b), 4.0 * nf / (b * b))
            } else {
                (
                    (2.0 * (nf - b) * (2.0 * nf + b) + b * b) / (nf * b * b),
                    2.0 * (nf - b) * (2.0 * nf + b) / (nf * b * b),
                )
            };
            EstimatorConstants { rho: b / (2.0 * nf), theta, theta_hat, simplified }
        }
    }
}

/// Output of one estimator draw.
pub struct Draw {
    pub s_tilde: DVector<f64>,
    /// `Delta_k` for the state the draw actually used (post-switch snapshot
    /// for SVRG, pre-update table for SAGA). Only computed on request.
    pub delta: Option<f64>,
    /// Sampled component indices, captured only in verbose mode.
    pub batch: Option<Vec<usize>>,
}

/// Mutable per-run estimator state. Owned by exactly one solver run.
#[derive(Debug, Clone)]
pub enum EstimatorState {
    FullBatch {
        prev_x: Option<DVector<f64>>,
        prev_g: Option<DVector<f64>>,
    },
    LooplessSvrg {
        snapshot: DVector<f64>,
        snapshot_value: DVector<f64>,
        switch_prob: f64,
        batch: usize,
        switch_count: u64,
    },
    Saga {
        table: Vec<DVector<f64>>,
        mean: DVector<f64>,
        batch: usize,
        updates_since_refresh: usize,
    },
}

impl EstimatorState {
    /// Initializes the estimator at `x0`. SAGA fills its table with
    /// `G_i x0` (n oracle calls); SVRG anchors the snapshot at `x0` and
    /// computes its full value (n oracle calls); the full-batch estimator
    /// is free.
    pub fn init(
        kind: &EstimatorKind,
        problem: &FiniteSumProblem,
        x0: &DVector<f64>,
        counter: &mut OracleCounter,
    ) -> Result<Self, EstimatorError> {
        match *kind {
            EstimatorKind::FullBatch => Ok(EstimatorState::FullBatch { prev_x: None, prev_g: None }),
            EstimatorKind::LooplessSvrg { batch, switch_prob } => {
                if batch == 0 {
                    return Err(EstimatorError::ZeroBatch);
                }
                if !(switch_prob > 0.0 && switch_prob < 1.0) {
                    return Err(EstimatorError::BadSwitchProbability { p: switch_prob });
                }
                let snapshot_value = problem.eval_full(x0, Some(counter))?;
                Ok(EstimatorState::LooplessSvrg {
                    snapshot: x0.clone(),
                    snapshot_value,
                    switch_prob,
                    batch,
                    switch_count: 0,
                })
            }
            EstimatorKind::Saga { batch } => {
                if batch == 0 {
                    return Err(EstimatorError::ZeroBatch);
                }
                if batch > problem.n() {
                    return Err(EstimatorError::BatchTooLarge { b: batch, n: problem.n() });
                }
                let mut table = Vec::with_capacity(problem.n());
                let mut mean = DVector::zeros(problem.dim());
                for i in 0..problem.n() {
                    let row = problem.eval_component(i, x0, Some(counter))?;
                    mean += &row;
                    table.push(row);
                }
                mean /= problem.n() as f64;
                Ok(EstimatorState::Saga { table, mean, batch, updates_since_refresh: 0 })
            }
        }
    }

    /// Draws `S~^k`. At `k = 0` the estimator returns the exact
    /// `(1 - gamma_0) G x^0` (the iteration-0 value is always full batch,
    /// reusing the initialization cache), consuming no randomness.
    #[allow(clippy::too_many_arguments)]
    pub fn draw(
        &mut self,
        problem: &FiniteSumProblem,
        x_k: &DVector<f64>,
        x_km1: &DVector<f64>,
        gamma_k: f64,
        k: usize,
        rng: &mut ChaCha8Rng,
        counter: &mut OracleCounter,
        want_delta: bool,
        want_batch: bool,
    ) -> Result<Draw, EstimatorError> {
        if k == 0 {
            debug_assert_eq!(x_k, x_km1, "iteration 0 uses the x^{{-1}} = x^0 convention");
            let full = match self {
                EstimatorState::FullBatch { prev_x, prev_g } => {
                    let g = problem.eval_full(x_k, Some(counter))?;
                    *prev_x = Some(x_k.clone());
                    *prev_g = Some(g.clone());
                    g
                }
                EstimatorState::LooplessSvrg { snapshot_value, .. } => snapshot_value.clone(),
                EstimatorState::Saga { mean, .. } => mean.clone(),
            };
            return Ok(Draw {
                s_tilde: full * (1.0 - gamma_k),
                delta: want_delta.then_some(0.0),
                batch: want_batch.then(Vec::new),
            });
        }
        match self {
            EstimatorState::FullBatch { prev_x, prev_g } => {
                let g_km1 = match (prev_x.as_ref(), prev_g.as_ref()) {
                    (Some(px), Some(pg)) if px == x_km1 => pg.clone(),
                    _ => problem.eval_full(x_km1, Some(counter))?,
                };
                let g_k = problem.eval_full(x_k, Some(counter))?;
                let s = &g_k - gamma_k * &g_km1;
                *prev_x = Some(x_k.clone());
                *prev_g = Some(g_k);
                Ok(Draw {
                    s_tilde: s,
                    delta: want_delta.then_some(0.0),
                    batch: want_batch.then(Vec::new),
                })
            }
            EstimatorState::LooplessSvrg {
                snapshot,
                snapshot_value,
                switch_prob,
                batch,
                switch_count,
            } => {
                // Snapshot rule: with probability p the reference moves to
                // x^{k-1} and its full value is refreshed (n oracle calls).
                if rng.gen::<f64>() < *switch_prob {
                    *snapshot = x_km1.clone();
                    *snapshot_value = problem.eval_full(x_km1, Some(counter))?;
                    *switch_count += 1;
                }
                let delta = want_delta
                    .then(|| svrg_delta(problem, snapshot, *batch, x_k, x_km1, gamma_k));
                let b = *batch;
                let indices: Vec<usize> = (0..b).map(|_| rng.gen_range(0..problem.n())).collect();
                let mut gb_w = DVector::zeros(problem.dim());
                let mut gb_k = DVector::zeros(problem.dim());
                let mut gb_km1 = DVector::zeros(problem.dim());
                for &i in &indices {
                    gb_w += problem.eval_component(i, snapshot, Some(counter))?;
                    gb_k += problem.eval_component(i, x_k, Some(counter))?;
                    gb_km1 += problem.eval_component(i, x_km1, Some(counter))?;
                }
                let bf = b as f64;
                gb_w /= bf;
                gb_k /= bf;
                gb_km1 /= bf;
                let s = (1.0 - gamma_k) * (&*snapshot_value - &gb_w) + gb_k - gamma_k * gb_km1;
                Ok(Draw { s_tilde: s, delta, batch: want_batch.then_some(indices) })
            }
            EstimatorState::Saga { table, mean, batch, updates_since_refresh } => {
                let delta = want_delta.then(|| saga_delta(problem, table, *batch, x_k, x_km1, gamma_k));
                let b = *batch;
                let n = problem.n();
                let indices = sample_without_replacement(rng, n, b);
                let mut gb_k_rows = Vec::with_capacity(b);
                let mut gb_k = DVector::zeros(problem.dim());
                for &i in &indices {
                    let row = problem.eval_component(i, x_k, Some(counter))?;
                    gb_k += &row;
                    gb_k_rows.push(row);
                }
                let bf = b as f64;
                gb_k /= bf;
                let gb_km1 = if gamma_k == 0.0 {
                    DVector::zeros(problem.dim())
                } else {
                    let mut acc = DVector::zeros(problem.dim());
                    for &i in &indices {
                        acc += problem.eval_component(i, x_km1, Some(counter))?;
                    }
                    acc / bf
                };
                let mut table_b = DVector::zeros(problem.dim());
                for &i in &indices {
                    table_b += &table[i];
                }
                table_b /= bf;
                let s = (1.0 - gamma_k) * (&*mean - &table_b) + gb_k - gamma_k * gb_km1;

                // Overwrite the sampled rows with the fresh G_i x^k values
                // and maintain the mean incrementally, with a periodic exact
                // refresh to keep accumulated round-off in check.
                let nf = n as f64;
                for (&i, row) in indices.iter().zip(gb_k_rows) {
                    *mean += (&row - &table[i]) / nf;
                    table[i] = row;
                }
                *updates_since_refresh += b;
                if *updates_since_refresh >= n {
                    let mut fresh = DVector::zeros(problem.dim());
                    for row in table.iter() {
                        fresh += row;
                    }
                    *mean = fresh / nf;
                    *updates_since_refresh = 0;
                }
                Ok(Draw { s_tilde: s, delta, batch: want_batch.then_some(indices) })
            }
        }
    }

    /// Exact expectation of [`Self::draw`] over the batch law, conditioned
    /// on the current state (snapshot after any switch, table before the
    /// update). Does not mutate the state. Equals `S^k` up to round-off.
    pub fn exact_conditional_mean(
        &self,
        problem: &FiniteSumProblem,
        x_k: &DVector<f64>,
        x_km1: &DVector<f64>,
        gamma_k: f64,
    ) -> DVector<f64> {
        match self {
            EstimatorState::FullBatch { .. } => {
                let g_k = problem.eval_full(x_k, None).expect("dims");
                let g_km1 = problem.eval_full(x_km1, None).expect("dims");
                g_k - gamma_k * g_km1
            }
            EstimatorState::LooplessSvrg { snapshot, snapshot_value, .. } => {
                let m_w = problem.component_mean(snapshot);
                let m_k = problem.component_mean(x_k);
                let m_km1 = problem.component_mean(x_km1);
                (1.0 - gamma_k) * (snapshot_value - m_w) + m_k - gamma_k * m_km1
            }
            EstimatorState::Saga { table, mean, .. } => {
                let n = problem.n() as f64;
                let mut fresh = DVector::zeros(problem.dim());
                for row in table {
                    fresh += row;
                }
                fresh /= n;
                let m_k = problem.component_mean(x_k);
                let m_km1 = problem.component_mean(x_km1);
                (1.0 - gamma_k) * (mean - fresh) + m_k - gamma_k * m_km1
            }
        }
    }

    /// Diagnostic variance bound `Delta_k` for the current state.
    pub fn delta_k(
        &self,
        problem: &FiniteSumProblem,
        x_k: &DVector<f64>,
        x_km1: &DVector<f64>,
        gamma_k: f64,
    ) -> f64 {
        match self {
            EstimatorState::FullBatch { .. } => 0.0,
            EstimatorState::LooplessSvrg { snapshot, batch, .. } => {
                svrg_delta(problem, snapshot, *batch, x_k, x_km1, gamma_k)
            }
            EstimatorState::Saga { table, batch, .. } => {
                saga_delta(problem, table, *batch, x_k, x_km1, gamma_k)
            }
        }
    }

    /// Exact expectation of `|S~ - S|^2` over the batch law for the current
    /// state. SVRG batches are i.i.d. with replacement; SAGA batches are
    /// simple random samples without replacement, which carries the finite
    /// population correction `(n - b)/(n - 1)`.
    pub fn exact_conditional_variance(
        &self,
        problem: &FiniteSumProblem,
        x_k: &DVector<f64>,
        x_km1: &DVector<f64>,
        gamma_k: f64,
    ) -> f64 {
        match self {
            EstimatorState::FullBatch { .. } => 0.0,
            EstimatorState::LooplessSvrg { snapshot, batch, .. } => {
                let (mean_sq, sq_mean) =
                    population_moments(problem, x_k, x_km1, gamma_k, |i| {
                        (1.0 - gamma_k) * problem.eval_component(i, snapshot, None).expect("dims")
                    });
                (mean_sq - sq_mean) / *batch as f64
            }
            EstimatorState::Saga { table, batch, .. } => {
                let (mean_sq, sq_mean) = population_moments(problem, x_k, x_km1, gamma_k, |i| {
                    (1.0 - gamma_k) * &table[i]
                });
                let n = problem.n() as f64;
                let b = *batch as f64;
                if n <= 1.0 {
                    0.0
                } else {
                    (mean_sq - sq_mean) / b * (n - b) / (n - 1.0)
                }
            }
        }
    }

    pub fn svrg_snapshot(&self) -> Option<(&DVector<f64>, &DVector<f64>)> {
        match self {
            EstimatorState::LooplessSvrg { snapshot, snapshot_value, .. } => {
                Some((snapshot, snapshot_value))
            }
            _ => None,
        }
    }

    pub fn svrg_switch_count(&self) -> u64 {
        match self {
            EstimatorState::LooplessSvrg { switch_count, .. } => *switch_count,
            _ => 0,
        }
    }

    pub fn saga_table(&self) -> Option<&[DVector<f64>]> {
        match self {
            EstimatorState::Saga { table, .. } => Some(table),
            _ => None,
        }
    }

    pub fn saga_cached_mean(&self) -> Option<&DVector<f64>> {
        match self {
            EstimatorState::Saga { mean, .. } => Some(mean),
            _ => None,
        }
    }

    /// Forces the SVRG snapshot to a scripted point (verification use).
    pub fn force_snapshot(&mut self, problem: &FiniteSumProblem, w: DVector<f64>) {
        if let EstimatorState::LooplessSvrg { snapshot, snapshot_value, .. } = self {
            *snapshot_value = problem.eval_full(&w, None).expect("dims");
            *snapshot = w;
        }
    }

    /// Forces the SAGA table to scripted rows (verification use).
    pub fn force_table(&mut self, rows: Vec<DVector<f64>>) {
        if let EstimatorState::Saga { table, mean, updates_since_refresh, .. } = self {
            let n = rows.len() as f64;
            let mut fresh = DVector::zeros(rows[0].len());
            for row in &rows {
                fresh += row;
            }
            *mean = fresh / n;
            *table = rows;
            *updates_since_refresh = 0;
        }
    }
}

fn population_moments<F>(
    problem: &FiniteSumProblem,
    x_k: &DVector<f64>,
    x_km1: &DVector<f64>,
    gamma_k: f64,
    anchor: F,
) -> (f64, f64)
where
    F: Fn(usize) -> DVector<f64>,
{
    let n = problem.n();
    let mut mean_sq = 0.0;
    let mut mean = DVector::zeros(problem.dim());
    for i in 0..n {
        let x_i = problem.eval_component(i, x_k, None).expect("dims")
            - gamma_k * problem.eval_component(i, x_km1, None).expect("dims")
            - anchor(i);
        mean_sq += x_i.norm_squared();
        mean += x_i;
    }
    let nf = n as f64;
    mean /= nf;
    (mean_sq / nf, mean.norm_squared())
}

fn svrg_delta(
    problem: &FiniteSumProblem,
    snapshot: &DVector<f64>,
    batch: usize,
    x_k: &DVector<f64>,
    x_km1: &DVector<f64>,
    gamma_k: f64,
) -> f64 {
    let n = problem.n();
    let mut acc = 0.0;
    for i in 0..n {
        let term = problem.eval_component(i, x_k, None).expect("dims")
            - gamma_k * problem.eval_component(i, x_km1, None).expect("dims")
            - (1.0 - gamma_k) * problem.eval_component(i, snapshot, None).expect("dims");
        acc += term.norm_squared();
    }
    acc / (n as f64 * batch as f64)
}

fn saga_delta(
    problem: &FiniteSumProblem,
    table: &[DVector<f64>],
    batch: usize,
    x_k: &DVector<f64>,
    x_km1: &DVector<f64>,
    gamma_k: f64,
) -> f64 {
    let n = problem.n();
    let mut acc = 0.0;
    for i in 0..n {
        let term = problem.eval_component(i, x_k, None).expect("dims")
            - gamma_k * problem.eval_component(i, x_km1, None).expect("dims")
            - (1.0 - gamma_k) * &table[i];
        acc += term.norm_squared();
    }
    acc / (n as f64 * batch as f64)
}

/// Uniform size-`b` subset of `0..n` (simple random sample).
fn sample_without_replacement(rng: &mut ChaCha8Rng, n: usize, b: usize) -> Vec<usize> {
    debug_assert!(b <= n);
    // Floyd's algorithm keeps the draw O(b) and deterministic.
    let mut chosen = Vec::with_capacity(b);
    for j in (n - b)..n {
        let t = rng.gen_range(0..=j);
        if chosen.contains(&t) {
            chosen.push(j);
        } else {
            chosen.push(t);
        }
    }
    chosen
}
