//! Finite-sum inclusions `0 in G u + T u` via backward-forward splitting.
//!
//! The splitting operators
//! `G_{i,lambda} x = G_i(J_{lambda T} x) + (x - J_{lambda T} x)/lambda`
//! turn the inclusion into a co-coercive equation that the fast KM solver
//! handles; the resolvent of the three supported `T` variants is exact
//! (identity, blockwise simplex projection, affine solve).

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::estimators::{EstimatorKind, EstimatorState};
use crate::operators::{FiniteSumProblem, OperatorError, OracleCounter};
use crate::schedule::Schedule;
use crate::solver::{
    divergence_guard, Budget, Diagnostics, RunSummary, SolverError, SolverTrace, StopReason,
    TraceRecord,
};

#[derive(Debug, Error)]
pub enum InclusionError {
    #[error("lambda = {lambda} outside the admissible interval [{lo}, {hi})")]
    LambdaOutOfRange { lambda: f64, lo: f64, hi: f64 },
    #[error("co-hypomonotonicity modulus times L_g must stay below 1, got {product}")]
    HypomonotonicityTooLarge { product: f64 },
    #[error("resolvent system (I + lambda T) is singular")]
    SingularResolvent,
    #[error("affine operator must be symmetric and invertible")]
    BadAffineOperator,
    #[error("simplex block dimensions {p1}+{p2} do not match vector length {len}")]
    BlockMismatch { p1: usize, p2: usize, len: usize },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Estimator(#[from] crate::estimators::EstimatorError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Euclidean projection of `v` onto the unit simplex, by the sort-threshold
/// rule. O(p log p); independent of any resolvent parameter.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        acc += u;
        let candidate = (1.0 - acc) / (j as f64 + 1.0);
        if u + candidate > 0.0 {
            tau = candidate;
        }
    }
    v.iter().map(|&x| (x + tau).max(0.0)).collect()
}

/// The maximal (possibly co-hypomonotone) operator `T`.
#[derive(Debug, Clone)]
pub enum MaximalOperator {
    Zero,
    /// Normal cone of the product of two unit simplexes; the resolvent is
    /// the blockwise projection, independent of `lambda`.
    SimplexNormalCone { p1: usize, p2: usize },
    /// `T u = M u + r` for a symmetric invertible `M`. Co-hypomonotone with
    /// `nu = max{0, -lambda_min(M^{-1})}`.
    AffineCoHypo { matrix: DMatrix<f64>, offset: DVector<f64>, nu: f64 },
}

impl MaximalOperator {
    /// Builds the affine variant, validating symmetry/invertibility and
    /// computing `nu` from the spectrum.
    pub fn affine(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self, InclusionError> {
        let p = matrix.nrows();
        if matrix.ncols() != p || offset.len() != p {
            return Err(InclusionError::BadAffineOperator);
        }
        let asym = (&matrix - matrix.transpose()).norm();
        if asym > 1e-10 * matrix.norm().max(1.0) {
            return Err(InclusionError::BadAffineOperator);
        }
        let eigs = matrix.clone().symmetric_eigen().eigenvalues;
        let mut nu = 0.0f64;
        for &lam in eigs.iter() {
            if lam.abs() < 1e-12 {
                return Err(InclusionError::BadAffineOperator);
            }
            nu = nu.max(-1.0 / lam);
        }
        Ok(MaximalOperator::AffineCoHypo { matrix, offset, nu })
    }

    /// Co-hypomonotonicity modulus of the operator.
    pub fn nu(&self) -> f64 {
        match self {
            MaximalOperator::Zero | MaximalOperator::SimplexNormalCone { .. } => 0.0,
            MaximalOperator::AffineCoHypo { nu, .. } => *nu,
        }
    }

    /// Resolvent `J_{lambda T} x`.
    pub fn resolvent(&self, lambda: f64, x: &DVector<f64>) -> Result<DVector<f64>, InclusionError> {
        match self {
            MaximalOperator::Zero => Ok(x.clone()),
            MaximalOperator::SimplexNormalCone { p1, p2 } => {
                if p1 + p2 != x.len() {
                    return Err(InclusionError::BlockMismatch { p1: *p1, p2: *p2, len: x.len() });
                }
                let first = project_simplex(&x.as_slice()[..*p1]);
                let second = project_simplex(&x.as_slice()[*p1..]);
                let mut out = DVector::zeros(x.len());
                out.as_mut_slice()[..*p1].copy_from_slice(&first);
                out.as_mut_slice()[*p1..].copy_from_slice(&second);
                Ok(out)
            }
            MaximalOperator::AffineCoHypo { matrix, offset, .. } => {
                let p = x.len();
                let system = DMatrix::identity(p, p) + lambda * matrix;
                let rhs = x - lambda * offset;
                system.lu().solve(&rhs).ok_or(InclusionError::SingularResolvent)
            }
        }
    }
}

/// Co-coercivity constant of the splitting operators,
/// `L = 4 (1 - L_g nu) / (lambda (4 - L_g lambda) - 4 nu)`, defined for
/// `nu < lambda < 2 (1 + sqrt(1 - L_g nu)) / L_g`.
pub fn bfs_cocoercivity(l_g: f64, nu: f64, lambda: f64) -> Result<f64, InclusionError> {
    if l_g * nu >= 1.0 {
        return Err(InclusionError::HypomonotonicityTooLarge { product: l_g * nu });
    }
    let hi = 2.0 * (1.0 + (1.0 - l_g * nu).sqrt()) / l_g;
    if !(lambda > nu && lambda < hi) {
        return Err(InclusionError::LambdaOutOfRange { lambda, lo: nu, hi });
    }
    let denom = lambda * (4.0 - l_g * lambda) - 4.0 * nu;
    debug_assert!(denom > 0.0);
    Ok(4.0 * (1.0 - l_g * nu) / denom)
}

/// Largest per-component co-coercivity constant `L_g = max_i L_i`, each
/// certified by the single-summand eigen pencil. Errors when any component
/// fails to be co-coercive.
pub fn component_cocoercivity(problem: &FiniteSumProblem) -> Result<f64, InclusionError> {
    let mut l_g = 0.0f64;
    for i in 0..problem.n() {
        let single = FiniteSumProblem::from_parts(
            vec![problem.component_matrix(i).clone()],
            vec![problem.component_offset(i).clone()],
        )?;
        let cert = single.certify_cocoercivity(1e-8)?;
        l_g = l_g.max(cert.l);
    }
    Ok(l_g)
}

/// A finite-sum inclusion with its splitting parameter and derived
/// co-coercivity constant.
#[derive(Debug, Clone)]
pub struct InclusionProblem {
    pub g: FiniteSumProblem,
    pub t: MaximalOperator,
    pub lambda: f64,
    pub l_g: f64,
    pub nu: f64,
    /// Co-coercivity constant of the splitting operators.
    pub l: f64,
}

impl InclusionProblem {
    /// Validates `2 nu <= lambda < 2 (1 + sqrt(1 - L_g nu))/L_g` and
    /// derives `L`.
    pub fn new(
        g: FiniteSumProblem,
        t: MaximalOperator,
        lambda: f64,
        l_g: f64,
    ) -> Result<Self, InclusionError> {
        let nu = t.nu();
        let l = bfs_cocoercivity(l_g, nu, lambda)?;
        if lambda < 2.0 * nu {
            return Err(InclusionError::LambdaOutOfRange {
                lambda,
                lo: 2.0 * nu,
                hi: 2.0 * (1.0 + (1.0 - l_g * nu).sqrt()) / l_g,
            });
        }
        Ok(Self { g, t, lambda, l_g, nu, l })
    }

    /// Default `lambda = 1/L_g` for monotone `T`; for co-hypomonotone `T`
    /// the larger of `2 nu` and `1/L_g`, clipped 1% below the upper end of
    /// the admissible interval.
    pub fn default_lambda(l_g: f64, nu: f64) -> f64 {
        let hi = 2.0 * (1.0 + (1.0 - l_g * nu).sqrt()) / l_g;
        (2.0 * nu).max(1.0 / l_g).min(0.99 * hi)
    }

    pub fn resolvent(&self, x: &DVector<f64>) -> Result<DVector<f64>, InclusionError> {
        self.t.resolvent(self.lambda, x)
    }

    /// One splitting component `G_i(J x) + (x - J x)/lambda`.
    pub fn bfs_eval_component(
        &self,
        i: usize,
        x: &DVector<f64>,
        counter: Option<&mut OracleCounter>,
    ) -> Result<DVector<f64>, InclusionError> {
        let u = self.resolvent(x)?;
        Ok(self.g.eval_component(i, &u, counter)? + (x - &u) / self.lambda)
    }

    /// Full splitting operator with one shared resolvent evaluation.
    pub fn bfs_eval_full(
        &self,
        x: &DVector<f64>,
        counter: Option<&mut OracleCounter>,
    ) -> Result<DVector<f64>, InclusionError> {
        let u = self.resolvent(x)?;
        Ok(self.g.eval_full(&u, counter)? + (x - &u) / self.lambda)
    }

    /// Forward-backward residual `F u = (u - J(u - lambda G u))/lambda`;
    /// zero exactly at solutions of the inclusion.
    pub fn fbs_residual(&self, u: &DVector<f64>) -> Result<DVector<f64>, InclusionError> {
        let forward = u - self.lambda * self.g.eval_full(u, None)?;
        Ok((u - self.resolvent(&forward)?) / self.lambda)
    }
}

/// Runs the variance-reduced fast KM scheme on the splitting equation:
/// `u^k = J x^k`, an estimator draw for `G u^k - gamma_k G u^{k-1}`, the
/// deterministic resolvent correction, then the KM update. Returns the
/// trace (residual column = `|G_lambda x^k|`, plus the FBS residual) and
/// the final `u^k`.
pub fn run_inclusion(
    problem: &InclusionProblem,
    x0: &DVector<f64>,
    kind: &EstimatorKind,
    schedule: &Schedule,
    budget: &Budget,
    seed: u64,
    diag: &Diagnostics,
) -> Result<(SolverTrace, DVector<f64>), InclusionError> {
    let start = std::time::Instant::now();
    let g = &problem.g;
    let n = g.n();
    let lambda = problem.lambda;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counter = OracleCounter::new();

    let u0 = problem.resolvent(x0)?;
    let mut estimator = EstimatorState::init(kind, g, &u0, &mut counter)?;
    let x0_norm = x0.norm();
    let bfs_residual_of = |x: &DVector<f64>, u: &DVector<f64>| -> Result<f64, InclusionError> {
        Ok((g.eval_full(u, None)? + (x - u) / lambda).norm())
    };
    let initial_residual = bfs_residual_of(x0, &u0)?;
    let stride = diag.stride.max(1);

    let mut records = Vec::new();
    let mut x_km1 = x0.clone();
    let mut x_k = x0.clone();
    let mut u_km1 = u0.clone();
    let mut u_k = u0;
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
        let params = schedule.params(k);
        let draw = estimator.draw(
            g,
            &u_k,
            &u_km1,
            params.gamma,
            k,
            &mut rng,
            &mut counter,
            false,
            diag.capture_batches,
        )?;
        let s_lambda = &draw.s_tilde + (&x_k - &u_k) / lambda
            - (params.gamma / lambda) * (&x_km1 - &u_km1);
        let x_kp1 = &x_k + params.theta * (&x_k - &x_km1) - params.eta * s_lambda;
        divergence_guard(&x_kp1, x0_norm, k).map_err(InclusionError::Solver)?;

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
                fbs_residual: Some(problem.fbs_residual(&u_k)?.norm()),
                batch: draw.batch,
            });
        }

        x_km1 = x_k;
        x_k = x_kp1;
        u_km1 = u_k;
        u_k = problem.resolvent(&x_k)?;
        residual_k = bfs_residual_of(&x_k, &u_k)?;
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
        fbs_residual: Some(problem.fbs_residual(&u_k)?.norm()),
        batch: None,
    });

    let trace = SolverTrace {
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
    };
    Ok((trace, u_k))
}
