//! The variance-reduced fast KM iteration
//! `x^{k+1} = x^k + theta_k (x^k - x^{k-1}) - eta_k S~^k`.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::estimators::{
    estimator_constants, EstimatorConstants, EstimatorError, EstimatorKind, EstimatorState,
};
use crate::operators::{FiniteSumProblem, OperatorError, OracleCounter};
use crate::schedule::{Schedule, StepParams};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("iterate diverged at k = {k} (|x| = {norm:.3e})")]
    Diverged { k: usize, norm: f64 },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Stopping budget; whichever limit is hit first ends the run.
#[derive(Debug, Clone, Copy, Default)]
pub struct Budget {
    pub max_iterations: Option<usize>,
    pub max_epochs: Option<f64>,
    /// Target on `|G x^k| / |G x^0|`.
    pub target_rel_residual: Option<f64>,
}

impl Budget {
    pub fn iterations(n: usize) -> Self {
        Self { max_iterations: Some(n), ..Default::default() }
    }

    pub fn epochs(e: f64) -> Self {
        Self { max_epochs: Some(e), ..Default::default() }
    }
}

/// What to record along the run. Residuals and distances are diagnostics
/// and never touch the oracle counter.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// Record every `stride`-th iterate (0 or 1 = every iterate).
    pub stride: usize,
    /// Compute the Lyapunov value per iteration (sublinear schedule only;
    /// needs `x_star`).
    pub lyapunov: bool,
    /// Record `Delta_k` and `U_k`.
    pub variance_terms: bool,
    /// Capture sampled batch indices per record.
    pub capture_batches: bool,
    /// Reference solution for distance metrics and the Lyapunov value.
    pub x_star: Option<DVector<f64>>,
}

impl Diagnostics {
    fn stride(&self) -> usize {
        self.stride.max(1)
    }
}

/// One recorded iterate.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub k: usize,
    /// Oracle count at the moment `x^k` became available.
    pub oracle: u64,
    pub epoch: f64,
    /// `|G x^k|` (for inclusion runs, the BFS residual).
    pub residual: f64,
    /// `|x^{k+1} - x^k|`; `None` on the final record.
    pub step_norm: Option<f64>,
    /// `|x^k - x*|^2` when a reference solution is available.
    pub dist_sq: Option<f64>,
    pub lyapunov: Option<f64>,
    pub delta: Option<f64>,
    pub u: Option<f64>,
    /// FBS residual `|F_lambda u^k|`, inclusion runs only.
    pub fbs_residual: Option<f64>,
    pub batch: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    IterationBudget,
    EpochBudget,
    TargetReached,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub iterations: usize,
    pub oracle_total: u64,
    pub epochs: f64,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub seed: u64,
    pub svrg_switches: u64,
    pub stopped: StopReason,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
    pub summary: RunSummary,
}

impl SolverTrace {
    pub fn final_rel_residual(&self) -> f64 {
        self.summary.final_residual / self.summary.initial_residual.max(f64::MIN_POSITIVE)
    }
}

const DIVERGENCE_FACTOR: f64 = 1e8;

pub(crate) fn divergence_guard(
    x: &DVector<f64>,
    x0_norm: f64,
    k: usize,
) -> Result<(), SolverError> {
    let norm = x.norm();
    if !norm.is_finite() || norm > DIVERGENCE_FACTOR * (1.0 + x0_norm) {
        return Err(SolverError::Diverged { k, norm });
    }
    Ok(())
}

/// One fast KM update from `(x^k, x^{k-1})`, advancing the estimator.
#[allow(clippy::too_many_arguments)]
pub fn step(
    problem: &FiniteSumProblem,
    estimator: &mut EstimatorState,
    params: &StepParams,
    x_k: &DVector<f64>,
    x_km1: &DVector<f64>,
    k: usize,
    rng: &mut ChaCha8Rng,
    counter: &mut OracleCounter,
) -> Result<DVector<f64>, SolverError> {
    let draw = estimator.draw(problem, x_k, x_km1, params.gamma, k, rng, counter, false, false)?;
    Ok(x_k + params.theta * (x_k - x_km1) - params.eta * draw.s_tilde)
}

/// Runs the iteration from `x0` until the budget is exhausted.
///
/// Deterministic given the seed. The iteration-0 estimate is always the
/// exact full-batch value, matching the `Delta_0 = 0` convention of the
/// sublinear analysis.
pub fn run(
    problem: &FiniteSumProblem,
    x0: &DVector<f64>,
    kind: &EstimatorKind,
    schedule: &Schedule,
    budget: &Budget,
    seed: u64,
    diag: &Diagnostics,
) -> Result<SolverTrace, SolverError> {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counter = OracleCounter::new();
    let mut estimator = EstimatorState::init(kind, problem, x0, &mut counter)?;
    let n = problem.n();
    let x0_norm = x0.norm();
    let initial_residual = problem.eval_full(x0, None)?.norm();

    let est_consts = estimator_constants(kind, n, false);
    let lyap_enabled = diag.lyapunov
        && diag.x_star.is_some()
        && matches!(schedule, Schedule::Sublinear { .. });
    let want_delta = diag.variance_terms || lyap_enabled;
    let stride = diag.stride();

    let mut records: Vec<TraceRecord> = Vec::new();
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
        if budget.max_iterations.is_none()
            && budget.max_epochs.is_none()
            && budget.target_rel_residual.is_none()
        {
            stop = StopReason::IterationBudget;
            break;
        }

        let oracle_at_k = counter.count();
        let params = schedule.params(k);
        let draw = estimator.draw(
            problem,
            &x_k,
            &x_km1,
            params.gamma,
            k,
            &mut rng,
            &mut counter,
            want_delta,
            diag.capture_batches,
        )?;
        let x_kp1 = &x_k + params.theta * (&x_k - &x_km1) - params.eta * &draw.s_tilde;
        divergence_guard(&x_kp1, x0_norm, k)?;

        let record_this = k.is_multiple_of(stride);
        if record_this {
            let mut rec = TraceRecord {
                k,
                oracle: oracle_at_k,
                epoch: oracle_at_k as f64 / n as f64,
                residual: residual_k,
                step_norm: Some((&x_kp1 - &x_k).norm()),
                dist_sq: diag.x_star.as_ref().map(|xs| (&x_k - xs).norm_squared()),
                lyapunov: None,
                delta: draw.delta,
                u: None,
                fbs_residual: None,
                batch: draw.batch,
            };
            if diag.variance_terms || lyap_enabled {
                let u_k =
                    if k == 0 { 0.0 } else { problem.displacement_energy(&x_k, &x_km1) };
                rec.u = Some(u_k);
                if lyap_enabled {
                    if let (Schedule::Sublinear { r, beta }, Some(xs)) =
                        (schedule, diag.x_star.as_ref())
                    {
                        rec.lyapunov = Some(lyapunov_value(
                            problem,
                            &x_k,
                            &x_kp1,
                            xs,
                            k,
                            *r,
                            *beta,
                            &est_consts,
                            draw.delta.unwrap_or(0.0),
                            u_k,
                        ));
                    }
                }
            }
            records.push(rec);
        }

        x_km1 = x_k;
        x_k = x_kp1;
        residual_k = problem.eval_full(&x_k, None)?.norm();
        k += 1;
    }

    // Final record for the last iterate.
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

/// The composite Lyapunov value
/// `E_k = 4 r beta (t_k - 1) [<G x^k, x^k - x*> - beta |G x^k|^2]
///      + |r (x^k - x*) + t_{k+1} (x^{k+1} - x^k)|^2 + r |x^k - x*|^2
///      + (4 beta^2 Theta_hat (t_k - 1)^2 / rho) U_k
///      + (4 beta^2 (1 - rho) (t_k - 1)^2 / rho) Delta_k`
/// with `t_k = k + r + 1`.
#[allow(clippy::too_many_arguments)]
pub fn lyapunov_value(
    problem: &FiniteSumProblem,
    x_k: &DVector<f64>,
    x_kp1: &DVector<f64>,
    x_star: &DVector<f64>,
    k: usize,
    r: f64,
    beta: f64,
    consts: &EstimatorConstants,
    delta_k: f64,
    u_k: f64,
) -> f64 {
    let t_k = k as f64 + r + 1.0;
    let t_kp1 = t_k + 1.0;
    let g_k = problem.eval_full(x_k, None).expect("dims");
    let d_star = x_k - x_star;
    let head = 4.0 * r * beta * (t_k - 1.0) * (g_k.dot(&d_star) - beta * g_k.norm_squared());
    let momentum = (r * &d_star + t_kp1 * (x_kp1 - x_k)).norm_squared();
    let anchor = r * d_star.norm_squared();
    let tail = 4.0 * beta * beta * (t_k - 1.0) * (t_k - 1.0) / consts.rho
        * (consts.theta_hat * u_k + (1.0 - consts.rho) * delta_k);
    head + momentum + anchor + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{generate_minimax, MinimaxSpec};
    use crate::rates::RateConstants;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn desk_problem(seed: u64) -> FiniteSumProblem {
        generate_minimax(&MinimaxSpec::new(3, 2, 8, seed)).unwrap().0
    }

    #[test]
    fn first_step_matches_closed_form() {
        // x^1 = x^0 - (2 beta r / (r + 2)) G x^0 for the sublinear schedule.
        let prob = desk_problem(1);
        let x0 = DVector::from_element(prob.dim(), 1.0);
        let beta = 0.05;
        let r = 3.0;
        let sched = Schedule::sublinear(r, beta).unwrap();
        let trace = run(
            &prob,
            &x0,
            &EstimatorKind::FullBatch,
            &sched,
            &Budget::iterations(1),
            0,
            &Diagnostics::default(),
        )
        .unwrap();
        let g0 = prob.eval_full(&x0, None).unwrap();
        let want = &x0 - (2.0 * beta * r / (r + 2.0)) * g0;
        let want_res = prob.eval_full(&want, None).unwrap().norm();
        assert!((trace.summary.final_residual - want_res).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_stays_fixed() {
        let prob = desk_problem(2);
        let xstar = prob.reference_solution().unwrap();
        for kind in [
            EstimatorKind::FullBatch,
            EstimatorKind::LooplessSvrg { batch: 2, switch_prob: 0.3 },
            EstimatorKind::Saga { batch: 2 },
        ] {
            let sched = Schedule::sublinear(3.0, 0.01).unwrap();
            let trace =
                run(&prob, &xstar, &kind, &sched, &Budget::iterations(50), 7, &Diagnostics::default())
                    .unwrap();
            assert!(trace.summary.final_residual < 1e-9, "kind {kind:?}");
        }
    }

    #[test]
    fn zero_iteration_budget_records_only_k0() {
        let prob = desk_problem(3);
        let x0 = DVector::from_element(prob.dim(), 1.0);
        let sched = Schedule::sublinear(3.0, 0.01).unwrap();
        let trace = run(
            &prob,
            &x0,
            &EstimatorKind::FullBatch,
            &sched,
            &Budget::iterations(0),
            0,
            &Diagnostics::default(),
        )
        .unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].k, 0);
        assert_eq!(trace.summary.iterations, 0);
    }

    #[test]
    fn full_batch_step_matches_scalar_recursion() {
        // FullBatch estimator against a hand-rolled scalar recursion with
        // theta_3 = 3/8, gamma_3 = 1/2, eta_3 = 3 beta / 2 on a 1-d problem.
        let prob = FiniteSumProblem::from_parts(
            vec![DMatrix::from_element(1, 1, 1.0)],
            vec![DVector::zeros(1)],
        )
        .unwrap();
        let beta = 0.1;
        let r = 3.0;
        let sched = Schedule::sublinear(r, beta).unwrap();
        let x0 = DVector::from_element(1, 1.0);
        let trace = run(
            &prob,
            &x0,
            &EstimatorKind::FullBatch,
            &sched,
            &Budget::iterations(4),
            0,
            &Diagnostics { stride: 1, ..Default::default() },
        )
        .unwrap();
        // scalar re-implementation of x^{k+1} = x^k + th (x^k - x^{k-1}) - eta (x^k - g x^{k-1})
        let mut xm = 1.0f64;
        let mut x = 1.0f64;
        for k in 0..4usize {
            let kf = k as f64;
            let th = kf / (kf + r + 2.0);
            let ga = kf / (kf + r);
            let eta = 2.0 * beta * (kf + r) / (kf + r + 2.0);
            if k == 3 {
                assert!((th - 3.0 / 8.0).abs() < 1e-15);
                assert!((ga - 0.5).abs() < 1e-15);
                assert!((eta - 1.5 * beta).abs() < 1e-15);
            }
            let s = x - ga * xm;
            let next = x + th * (x - xm) - eta * s;
            xm = x;
            x = next;
        }
        assert!((trace.summary.final_residual - x.abs()).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let prob = desk_problem(4);
        let x0 = DVector::from_element(prob.dim(), 1.0);
        let sched = Schedule::sublinear(3.0, 0.005).unwrap();
        let kind = EstimatorKind::Saga { batch: 3 };
        let a = run(&prob, &x0, &kind, &sched, &Budget::iterations(100), 42, &Diagnostics::default())
            .unwrap();
        let b = run(&prob, &x0, &kind, &sched, &Budget::iterations(100), 42, &Diagnostics::default())
            .unwrap();
        assert_eq!(a.summary.final_residual.to_bits(), b.summary.final_residual.to_bits());
        assert_eq!(a.summary.oracle_total, b.summary.oracle_total);
    }

    #[test]
    fn divergence_guard_fires() {
        let prob = desk_problem(5);
        let x0 = DVector::from_element(prob.dim(), 1.0);
        // absurd beta forces blow-up
        let sched = Schedule::constant(1e6).unwrap();
        let res = run(
            &prob,
            &x0,
            &EstimatorKind::FullBatch,
            &sched,
            &Budget::iterations(400),
            0,
            &Diagnostics::default(),
        );
        assert!(matches!(res, Err(SolverError::Diverged { .. })));
    }

    #[test]
    fn target_residual_stop_reason() {
        let prob = desk_problem(12);
        let cert = prob.certify_cocoercivity(1e-8).unwrap();
        let x0 = DVector::from_element(prob.dim(), 1.0);
        let sched = Schedule::sublinear(3.0, 1.0 / (2.0 * cert.l)).unwrap();
        let budget = Budget {
            max_iterations: Some(100_000),
            max_epochs: None,
            target_rel_residual: Some(1e-3),
        };
        let trace = run(
            &prob,
            &x0,
            &EstimatorKind::FullBatch,
            &sched,
            &budget,
            0,
            &Diagnostics::default(),
        )
        .unwrap();
        assert_eq!(trace.summary.stopped, StopReason::TargetReached);
        assert!(trace.final_rel_residual() <= 1e-3);
        assert!(trace.summary.iterations < 100_000);
    }

    #[test]
    fn oracle_epochs_consistent() {
        let prob = desk_problem(6);
        let x0 = DVector::from_element(prob.dim(), 1.0);
        let sched = Schedule::sublinear(3.0, 0.01).unwrap();
        let kind = EstimatorKind::Saga { batch: 2 };
        let trace =
            run(&prob, &x0, &kind, &sched, &Budget::iterations(40), 3, &Diagnostics::default())
                .unwrap();
        let n = prob.n() as f64;
        let mut prev = 0u64;
        for rec in &trace.records {
            assert!(rec.oracle >= prev);
            assert!((rec.epoch - rec.oracle as f64 / n).abs() < 1e-15);
            prev = rec.oracle;
        }
    }

    #[test]
    fn lyapunov_zero_at_solution() {
        let prob = desk_problem(7);
        let xstar = prob.reference_solution().unwrap();
        let consts = estimator_constants(&EstimatorKind::FullBatch, prob.n(), false);
        let e = lyapunov_value(&prob, &xstar, &xstar, &xstar, 0, 3.0, 0.1, &consts, 0.0, 0.0);
        assert!(e.abs() < 1e-18);
    }

    #[test]
    fn lyapunov_initial_bound_on_random_starts() {
        // E_0 <= r (1 + 3r + 8 r L^2 beta^2) |x0 - x*|^2 on 100 starts.
        let prob = desk_problem(8);
        let cert = prob.certify_cocoercivity(1e-8).unwrap();
        let xstar = prob.reference_solution().unwrap();
        let r = 3.0;
        let beta = 1.0 / (2.0 * cert.l);
        let sched = Schedule::sublinear(r, beta).unwrap();
        let consts = estimator_constants(&EstimatorKind::FullBatch, prob.n(), false);
        let c0 = r * (1.0 + 3.0 * r + 8.0 * r * cert.l * cert.l * beta * beta);
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..100 {
            let x0 = DVector::from_fn(prob.dim(), |_, _| rng.gen::<f64>() * 4.0 - 2.0);
            // run one step to get x^1
            let mut counter = OracleCounter::new();
            let mut est =
                EstimatorState::init(&EstimatorKind::FullBatch, &prob, &x0, &mut counter).unwrap();
            let params = sched.params(0);
            let mut r2 = ChaCha8Rng::seed_from_u64(0);
            let x1 = step(&prob, &mut est, &params, &x0, &x0, 0, &mut r2, &mut counter).unwrap();
            let e0 = lyapunov_value(&prob, &x0, &x1, &xstar, 0, r, beta, &consts, 0.0, 0.0);
            let cap = c0 * (&x0 - &xstar).norm_squared();
            assert!(e0 <= cap * (1.0 + 1e-12), "E0 {e0} cap {cap}");
        }
    }

    #[test]
    fn lyapunov_matches_term_by_term_recomputation() {
        let prob = desk_problem(9);
        let xstar = prob.reference_solution().unwrap();
        let kind = EstimatorKind::Saga { batch: 2 };
        let consts = estimator_constants(&kind, prob.n(), false);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = prob.dim();
        let x_k = DVector::from_fn(p, |_, _| rng.gen::<f64>() - 0.5);
        let x_kp1 = DVector::from_fn(p, |_, _| rng.gen::<f64>() - 0.5);
        let (k, r, beta, delta, u) = (4usize, 3.0, 0.07, 0.9, 1.3);
        let got = lyapunov_value(&prob, &x_k, &x_kp1, &xstar, k, r, beta, &consts, delta, u);
        // independent recomputation
        let t_k = k as f64 + r + 1.0;
        let g = prob.eval_full(&x_k, None).unwrap();
        let mut want = 0.0;
        want += 4.0 * r * beta * (t_k - 1.0) * (g.dot(&(&x_k - &xstar)) - beta * g.norm_squared());
        want += (r * (&x_k - &xstar) + (t_k + 1.0) * (&x_kp1 - &x_k)).norm_squared();
        want += r * (&x_k - &xstar).norm_squared();
        want += 4.0 * beta * beta * consts.theta_hat * (t_k - 1.0) * (t_k - 1.0) / consts.rho * u;
        want += 4.0 * beta * beta * (1.0 - consts.rho) * (t_k - 1.0) * (t_k - 1.0) / consts.rho
            * delta;
        assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0));
    }

    #[test]
    fn full_batch_lyapunov_monotone() {
        // Deterministic runs keep E_k non-increasing when beta < 1/L.
        let prob = desk_problem(10);
        let cert = prob.certify_cocoercivity(1e-8).unwrap();
        let xstar = prob.reference_solution().unwrap();
        let beta = 1.0 / (2.0 * cert.l);
        let sched = Schedule::sublinear(3.0, beta).unwrap();
        let diag = Diagnostics {
            stride: 1,
            lyapunov: true,
            variance_terms: true,
            capture_batches: false,
            x_star: Some(xstar),
        };
        let x0 = DVector::from_element(prob.dim(), 1.0);
        let trace = run(
            &prob,
            &x0,
            &EstimatorKind::FullBatch,
            &sched,
            &Budget::iterations(300),
            0,
            &diag,
        )
        .unwrap();
        let e: Vec<f64> = trace.records.iter().filter_map(|r| r.lyapunov).collect();
        assert!(e.len() >= 300);
        let slack = 1e-9 * e[0];
        for w in e.windows(2) {
            assert!(w[1] <= w[0] + slack, "E went up: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn single_summand_full_batch_monotone_after_burn_in() {
        // n = 1 deterministic runs on co-coercive instances decay
        // monotonically after a short burn-in; checked on 10 seeds.
        let mut found = 0;
        let mut seed = 0u64;
        while found < 10 && seed < 200 {
            if let Ok((prob, cert)) = generate_minimax(&MinimaxSpec::new(2, 2, 1, seed)) {
                let x0 = DVector::from_element(prob.dim(), 1.0);
                let sched = Schedule::sublinear(3.0, 1.0 / (2.0 * cert.l)).unwrap();
                let tr = run(
                    &prob,
                    &x0,
                    &EstimatorKind::FullBatch,
                    &sched,
                    &Budget::iterations(1500),
                    0,
                    &Diagnostics { stride: 1, ..Default::default() },
                )
                .unwrap();
                let res: Vec<f64> = tr.records.iter().map(|r| r.residual).collect();
                for (i, w) in res.windows(2).enumerate().skip(5) {
                    assert!(
                        w[1] <= w[0] * (1.0 + 1e-12),
                        "seed {seed}: residual rose at k = {}",
                        i + 1
                    );
                }
                found += 1;
            }
            seed += 1;
        }
        assert_eq!(found, 10);
    }

    #[test]
    fn residual_bound_holds_on_mean_small_case() {
        // Bound-level sanity at tiny scale: 8-summand problem, planned
        // beta, 20 seeds, bound never violated.
        let prob = desk_problem(11);
        let cert = prob.certify_cocoercivity(1e-8).unwrap();
        let xstar = prob.reference_solution().unwrap();
        let x0 = DVector::from_element(prob.dim(), 1.0);
        let r0_sq = (&x0 - &xstar).norm_squared();
        let kind = EstimatorKind::Saga { batch: 2 };
        let est = estimator_constants(&kind, prob.n(), true);
        let b3 = 8.0;
        let beta = b3 / (2.0 * cert.l * (b3 + 64.0 * 64.0));
        let sched = Schedule::sublinear(3.0, beta).unwrap();
        let rc = RateConstants::new(3.0, beta, cert.l, &est).unwrap();
        let iters = 300usize;
        let seeds = 20u64;
        let mut mean_res_sq = vec![0.0f64; iters + 1];
        for seed in 0..seeds {
            let trace = run(
                &prob,
                &x0,
                &kind,
                &sched,
                &Budget::iterations(iters),
                seed,
                &Diagnostics { stride: 1, ..Default::default() },
            )
            .unwrap();
            for rec in &trace.records {
                mean_res_sq[rec.k] += rec.residual * rec.residual / seeds as f64;
            }
        }
        for (k, m) in mean_res_sq.iter().enumerate() {
            assert!(*m <= rc.residual_bound(k, r0_sq), "k={k}: {m} > bound");
        }
    }
}
