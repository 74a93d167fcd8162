//! Deterministic and non-accelerated stochastic baselines used for
//! epoch-aligned comparisons: the exact fast KM recursion, past-extrapolated
//! optimistic gradient, and a plain variance-reduced forward scheme.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::estimators::{EstimatorKind, EstimatorState};
use crate::operators::{FiniteSumProblem, OracleCounter};
use crate::schedule::Schedule;
use crate::solver::{
    divergence_guard, run, Budget, Diagnostics, RunSummary, SolverError, SolverTrace, StopReason,
    TraceRecord,
};

/// Baseline method tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineConfig {
    /// Fast KM with the exact `S^k` (identical to the solver with the
    /// full-batch estimator).
    DetFkm { r: f64, beta: f64 },
    /// Optimistic gradient `x^{k+1} = x^k - eta (2 G x^k - G x^{k-1})`.
    Og { eta: f64 },
    /// Plain forward iteration `x^{k+1} = x^k - eta S~^k` where `S~^k`
    /// estimates `G x^k` (a draw with `gamma = 0`).
    PlainVrForward { eta: f64 },
}

/// Dispatches a configured baseline.
pub fn run_baseline(
    problem: &FiniteSumProblem,
    x0: &DVector<f64>,
    config: &BaselineConfig,
    estimator: &EstimatorKind,
    budget: &Budget,
    seed: u64,
    diag: &Diagnostics,
) -> Result<SolverTrace, SolverError> {
    match *config {
        BaselineConfig::DetFkm { r, beta } => run_det_fkm(problem, x0, r, beta, budget, diag),
        BaselineConfig::Og { eta } => run_og(problem, x0, eta, budget, diag),
        BaselineConfig::PlainVrForward { eta } => {
            run_plain_vr_forward(problem, x0, estimator, eta, budget, seed, diag)
        }
    }
}

/// Deterministic fast KM; bit-for-bit the solver run with the full-batch
/// estimator and the same parameters.
pub fn run_det_fkm(
    problem: &FiniteSumProblem,
    x0: &DVector<f64>,
    r: f64,
    beta: f64,
    budget: &Budget,
    diag: &Diagnostics,
) -> Result<SolverTrace, SolverError> {
    let sched = Schedule::sublinear(r, beta).expect("validated by caller");
    run(problem, x0, &EstimatorKind::FullBatch, &sched, budget, 0, diag)
}

/// Past-extrapolated optimistic gradient with constant step `eta`,
/// `x^{-1} = x^0`. Costs `n` oracle calls per iteration (the previous full
/// value is cached).
pub fn run_og(
    problem: &FiniteSumProblem,
    x0: &DVector<f64>,
    eta: f64,
    budget: &Budget,
    diag: &Diagnostics,
) -> Result<SolverTrace, SolverError> {
    let start = std::time::Instant::now();
    let n = problem.n();
    let mut counter = OracleCounter::new();
    let x0_norm = x0.norm();
    let initial_residual = problem.eval_full(x0, None)?.norm();
    let stride = diag.stride.max(1);

    let mut records = Vec::new();
    let mut x_k = x0.clone();
    let mut g_km1 = problem.eval_full(x0, Some(&mut counter))?;
    let mut residual_k = initial_residual;
    let mut k = 0usize;
    let stop;
    loop {
        if let Some(max) = budget.max_iterations {
            if k >= max {
                stop = StopReason::IterationBudget;
                break;
            }
        }
        if let Some(max) = budget.max_epochs {
            if counter.epochs(n) >= max {
                stop = StopReason::EpochBudget;
                break;
            }
        }
        if let Some(target) = budget.target_rel_residual {
            if residual_k <= target * initial_residual {
                stop = StopReason::TargetReached;
                break;
            }
        }
        if budget.max_iterations.is_none() && budget.max_epochs.is_none()
            && budget.target_rel_residual.is_none() {
                stop = StopReason::IterationBudget;
                break;
            }
        let oracle_at_k = counter.count();
        let g_k = if k == 0 { g_km1.clone() } else { problem.eval_full(&x_k, Some(&mut counter))? };
        let x_kp1 = &x_k - eta * (2.0 * &g_k - &g_km1);
        divergence_guard(&x_kp1, x0_norm, k)?;
        if k.is_multiple_of(stride) {
            records.push(TraceRecord {
                k,
                oracle: oracle_at_k,
                epoch: oracle_at_k as f64 / n as f64,
                residual: residual_k,
                step_norm: Some((&x_kp1 - &x_k).norm()),
                dist_sq: diag.x_star.as_ref().map(|xs| (&x_k - xs).norm_squared()),
                lyapunov: None,
                delta: None,
                u: None,
                fbs_residual: None,
                batch: None,
            });
        }
        g_km1 = g_k;
        x_k = x_kp1;
        residual_k = problem.eval_full(&x_k, None)?.norm();
        k += 1;
    }
    records.push(TraceRecord {
        k,
        oracle: counter.count(),
        epoch: counter.epochs(n),
        residual: residual_k,
        step_norm: None,
        dist_sq: diag.x_star.as_ref().map(|xs| (&x_k - xs).norm_squared()),
        lyapunov: None,
        delta: None,
        u: None,
        fbs_residual: None,
        batch: None,
    });
    Ok(SolverTrace {
        records,
        summary: RunSummary {
            iterations: k,
            oracle_total: counter.count(),
            epochs: counter.epochs(n),
            initial_residual,
            final_residual: residual_k,
            seed: 0,
            svrg_switches: 0,
            stopped: stop,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    })
}

/// Plain variance-reduced forward scheme `x^{k+1} = x^k - eta S~^k` with a
/// `gamma = 0` estimator draw (so `S~^k` estimates `G x^k`).
pub fn run_plain_vr_forward(
    problem: &FiniteSumProblem,
    x0: &DVector<f64>,
    kind: &EstimatorKind,
    eta: f64,
    budget: &Budget,
    seed: u64,
    diag: &Diagnostics,
) -> Result<SolverTrace, SolverError> {
    let start = std::time::Instant::now();
    let n = problem.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counter = OracleCounter::new();
    let mut estimator = EstimatorState::init(kind, problem, x0, &mut counter)?;
    let x0_norm = x0.norm();
    let initial_residual = problem.eval_full(x0, None)?.norm();
    let stride = diag.stride.max(1);

    let mut records = Vec::new();
    let mut x_km1 = x0.clone();
    let mut x_k = x0.clone();
    let mut residual_k = initial_residual;
    let mut k = 0usize;
    let stop;
    loop {
        if let Some(max) = budget.max_iterations {
            if k >= max {
                stop = StopReason::IterationBudget;
                break;
            }
        }
        if let Some(max) = budget.max_epochs {
            if counter.epochs(n) >= max {
                stop = StopReason::EpochBudget;
                break;
            }
        }
        if let Some(target) = budget.target_rel_residual {
            if residual_k <= target * initial_residual {
                stop = StopReason::TargetReached;
                break;
            }
        }
        if budget.max_iterations.is_none() && budget.max_epochs.is_none()
            && budget.target_rel_residual.is_none() {
                stop = StopReason::IterationBudget;
                break;
            }
        let oracle_at_k = counter.count();
        let draw =
            estimator.draw(problem, &x_k, &x_km1, 0.0, k, &mut rng, &mut counter, false, false)?;
        let x_kp1 = &x_k - eta * draw.s_tilde;
        divergence_guard(&x_kp1, x0_norm, k)?;
        if k.is_multiple_of(stride) {
            records.push(TraceRecord {
                k,
                oracle: oracle_at_k,
                epoch: oracle_at_k as f64 / n as f64,
                residual: residual_k,
                step_norm: Some((&x_kp1 - &x_k).norm()),
                dist_sq: diag.x_star.as_ref().map(|xs| (&x_k - xs).norm_squared()),
                lyapunov: None,
                delta: None,
                u: None,
                fbs_residual: None,
                batch: None,
            });
        }
        x_km1 = x_k;
        x_k = x_kp1;
        residual_k = problem.eval_full(&x_k, None)?.norm();
        k += 1;
    }
    records.push(TraceRecord {
        k,
        oracle: counter.count(),
        epoch: counter.epochs(n),
        residual: residual_k,
        step_norm: None,
        dist_sq: diag.x_star.as_ref().map(|xs| (&x_k - xs).norm_squared()),
        lyapunov: None,
        delta: None,
        u: None,
        fbs_residual: None,
        batch: None,
    });
    Ok(SolverTrace {
        records,
        summary: RunSummary {
            iterations: k,
            oracle_total: counter.count(),
            epochs: counter.epochs(n),
            initial_residual,
            final_residual: residual_k,
            seed,
            svrg_switches: estimator.svrg_switch_count(),
            stopped: stop,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{generate_minimax, MinimaxSpec};
    use nalgebra::DMatrix;

    #[test]
    fn det_fkm_equals_full_batch_run_bitwise() {
        let (prob, _) = generate_minimax(&MinimaxSpec::new(3, 2, 6, 1)).unwrap();
        let x0 = DVector::from_element(prob.dim(), 1.0);
        let (r, beta) = (3.0, 0.02);
        let budget = Budget::iterations(60);
        let a = run_det_fkm(&prob, &x0, r, beta, &budget, &Diagnostics::default()).unwrap();
        let sched = Schedule::sublinear(r, beta).unwrap();
        let b = run(
            &prob,
            &x0,
            &EstimatorKind::FullBatch,
            &sched,
            &budget,
            0,
            &Diagnostics::default(),
        )
        .unwrap();
        assert_eq!(a.summary.final_residual.to_bits(), b.summary.final_residual.to_bits());
        assert_eq!(a.summary.oracle_total, b.summary.oracle_total);
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.residual.to_bits(), rb.residual.to_bits());
        }
    }

    #[test]
    fn det_fkm_first_step_scalar() {
        // n = 1, G = I, beta = 1/6, r = 3, x0 = 1: x1 = 1 - 2*(1/6)*3/5 = 0.8
        let prob = FiniteSumProblem::from_parts(
            vec![DMatrix::identity(1, 1)],
            vec![DVector::zeros(1)],
        )
        .unwrap();
        let x0 = DVector::from_element(1, 1.0);
        let t = run_det_fkm(&prob, &x0, 3.0, 1.0 / 6.0, &Budget::iterations(1), &Diagnostics::default())
            .unwrap();
        assert!((t.summary.final_residual - 0.8).abs() < 1e-15);
    }

    #[test]
    fn og_first_step_and_stationarity() {
        let (prob, _) = generate_minimax(&MinimaxSpec::new(2, 2, 4, 2)).unwrap();
        let xstar = prob.reference_solution().unwrap();
        let t = run_og(&prob, &xstar, 0.05, &Budget::iterations(20), &Diagnostics::default())
            .unwrap();
        assert!(t.summary.final_residual < 1e-10);

        let x0 = DVector::from_element(prob.dim(), 1.0);
        let t1 = run_og(&prob, &x0, 0.05, &Budget::iterations(1), &Diagnostics::default()).unwrap();
        let want = &x0 - 0.05 * prob.eval_full(&x0, None).unwrap();
        let want_res = prob.eval_full(&want, None).unwrap().norm();
        assert!((t1.summary.final_residual - want_res).abs() < 1e-12);
    }

    #[test]
    fn og_monotone_after_burn_in_on_rotation_plus_ridge() {
        // G = a I + skew with a > 0: L = (a^2 + 1)/a, eta = 1/(2L).
        let a = 0.5;
        let m = DMatrix::from_row_slice(2, 2, &[a, 1.0, -1.0, a]);
        let prob = FiniteSumProblem::from_parts(vec![m], vec![DVector::zeros(2)]).unwrap();
        let l = (a * a + 1.0) / a;
        let x0 = DVector::from_vec(vec![1.0, -0.7]);
        let t = run_og(
            &prob,
            &x0,
            1.0 / (2.0 * l),
            &Budget::iterations(300),
            &Diagnostics { stride: 1, ..Default::default() },
        )
        .unwrap();
        let res: Vec<f64> = t.records.iter().map(|r| r.residual).collect();
        for w in res[5..].windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn plain_vr_forward_single_summand_is_forward_iteration() {
        let prob = FiniteSumProblem::from_parts(
            vec![DMatrix::identity(1, 1)],
            vec![DVector::zeros(1)],
        )
        .unwrap();
        let x0 = DVector::from_element(1, 1.0);
        let eta = 0.25;
        let t = run_baseline(
            &prob,
            &x0,
            &BaselineConfig::PlainVrForward { eta },
            &EstimatorKind::Saga { batch: 1 },
            &Budget::iterations(10),
            0,
            &Diagnostics::default(),
        )
        .unwrap();
        // x^{k+1} = (1 - eta) x^k
        let want = (1.0 - eta_pow(eta, 10)) * 0.0 + eta_pow(1.0 - eta, 10);
        assert!((t.summary.final_residual - want).abs() < 1e-12);
    }

    fn eta_pow(base: f64, k: usize) -> f64 {
        base.powi(k as i32)
    }

    #[test]
    fn gamma_zero_draw_estimates_plain_value() {
        // a gamma = 0 draw is an unbiased estimator of G x^k
        let (prob, _) = generate_minimax(&MinimaxSpec::new(2, 2, 6, 5)).unwrap();
        let x0 = DVector::from_element(prob.dim(), 1.0);
        let x1 = &x0 * 0.8;
        let mut c = crate::operators::OracleCounter::new();
        let st = crate::estimators::EstimatorState::init(
            &EstimatorKind::Saga { batch: 2 },
            &prob,
            &x0,
            &mut c,
        )
        .unwrap();
        let mean = st.exact_conditional_mean(&prob, &x1, &x0, 0.0);
        let want = prob.eval_full(&x1, None).unwrap();
        assert!((mean - want).norm() < 1e-12);
    }

    #[test]
    fn plain_vr_forward_geometric_decay_in_mean() {
        let (prob, cert) = {
            let (p, c) = generate_minimax(&MinimaxSpec::new(3, 2, 10, 3)).unwrap();
            (p, c)
        };
        assert!(cert.sigma > 0.0, "need a strongly quasi-monotone instance");
        let xstar = prob.reference_solution().unwrap();
        let x0 = DVector::from_element(prob.dim(), 1.0);
        let eta = 1.0 / (4.0 * cert.l);
        let iters = 2000;
        let seeds = 20u64;
        let mut mean_start = 0.0;
        let mut mean_end = 0.0;
        for seed in 0..seeds {
            let t = run_plain_vr_forward(
                &prob,
                &x0,
                &EstimatorKind::Saga { batch: 2 },
                eta,
                &Budget::iterations(iters),
                seed,
                &Diagnostics { x_star: Some(xstar.clone()), ..Default::default() },
            )
            .unwrap();
            mean_start += t.records[0].dist_sq.unwrap() / seeds as f64;
            mean_end += t.records.last().unwrap().dist_sq.unwrap() / seeds as f64;
        }
        assert!(mean_end < 1e-6 * mean_start, "start {mean_start:.3e} end {mean_end:.3e}");
    }
}
