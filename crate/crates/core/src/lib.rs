//! Variance-reduced fast Krasnoselskii-Mann solvers for finite-sum
//! co-coercive root-finding problems `G x = 0` and finite-sum inclusions
//! `0 in G u + T u`, with loopless-SVRG and SAGA estimators, closed-form
//! step-size planning, deterministic baselines, and a verification layer
//! that empirically certifies the estimator laws, Lyapunov descent, and
//! the sublinear / linear rate bounds.

pub mod baselines;
pub mod estimators;
pub mod inclusion;
pub mod operators;
pub mod problem_io;
pub mod rates;
pub mod schedule;
pub mod seed;
pub mod solver;
pub mod verification;

pub use estimators::{estimator_constants, EstimatorConstants, EstimatorKind, EstimatorState};
pub use inclusion::{
    bfs_cocoercivity, component_cocoercivity, project_simplex, InclusionProblem, MaximalOperator,
};
pub use operators::{
    generate_minimax, CocoercivityCertificate, FiniteSumProblem, MinimaxSpec, OracleCounter,
};
pub use rates::{linear_distance_bound, rate_bound, BoundKind, RateConstants};
pub use schedule::{linear_beta_bar, linear_omega, plan_step_size, Regime, Schedule, StepSizePlan};
pub use solver::{
    lyapunov_value, run, step, Budget, Diagnostics, RunSummary, SolverError, SolverTrace,
    StopReason, TraceRecord,
};
pub use verification::{CheckResult, CheckStatus};
