//! Momentum / correction / step-size schedules and step-size planning.

use thiserror::Error;

use crate::estimators::{estimator_constants, EstimatorConstants, EstimatorKind};

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("sublinear schedule needs r > 2, got {r}")]
    BadR { r: f64 },
    #[error("step size must be positive, got {beta}")]
    BadBeta { beta: f64 },
    #[error("linear regime needs sigma > 0")]
    SigmaRequired,
    #[error("linear regime infeasible: 2 rho = {two_rho} >= 1")]
    RhoTooLarge { two_rho: f64 },
    #[error("linear regime infeasible: N^2 + 12 rho M = {value} < 0")]
    NegativeDiscriminant { value: f64 },
}

/// Per-iteration parameter triple of the fast KM update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub theta: f64,
    pub gamma: f64,
    pub eta: f64,
}

/// Parameter schedule.
///
/// Sublinear: `theta_k = k/(k+r+2)`, `gamma_k = k/(k+r)`,
/// `eta_k = 2 beta (k+r)/(k+r+2)` with `r > 2`.
/// Constant: `theta = 1/3`, `gamma = 1/2`, `eta = beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Sublinear { r: f64, beta: f64 },
    Constant { beta: f64 },
}

impl Schedule {
    pub fn sublinear(r: f64, beta: f64) -> Result<Self, ScheduleError> {
        if !(r > 2.0) {
            return Err(ScheduleError::BadR { r });
        }
        if !(beta > 0.0) {
            return Err(ScheduleError::BadBeta { beta });
        }
        Ok(Schedule::Sublinear { r, beta })
    }

    pub fn constant(beta: f64) -> Result<Self, ScheduleError> {
        if !(beta > 0.0) {
            return Err(ScheduleError::BadBeta { beta });
        }
        Ok(Schedule::Constant { beta })
    }

    pub fn beta(&self) -> f64 {
        match *self {
            Schedule::Sublinear { beta, .. } | Schedule::Constant { beta } => beta,
        }
    }

    pub fn params(&self, k: usize) -> StepParams {
        match *self {
            Schedule::Sublinear { r, beta } => {
                let kf = k as f64;
                StepParams {
                    theta: kf / (kf + r + 2.0),
                    gamma: kf / (kf + r),
                    eta: 2.0 * beta * (kf + r) / (kf + r + 2.0),
                }
            }
            Schedule::Constant { beta } => {
                StepParams { theta: 1.0 / 3.0, gamma: 0.5, eta: beta }
            }
        }
    }
}

/// Which convergence regime a step size is planned for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Sublinear,
    Linear,
}

/// A planned step size together with its theoretical cap.
#[derive(Debug, Clone)]
pub struct StepSizePlan {
    pub beta: f64,
    pub beta_bar: f64,
    pub regime: Regime,
    /// Contraction exponent `omega = 2 beta sigma / (3 + 4 beta sigma)`
    /// of the linear regime (also reported for sublinear plans when
    /// `sigma > 0` is known).
    pub omega: Option<f64>,
    /// Identifier of the formula that produced `beta`.
    pub provenance: &'static str,
}

/// Chooses `beta` for a run.
///
/// Sublinear regime: the closed-form choices
/// `beta = b p^2 / (2L (b p^2 + 64))` for SVRG,
/// `beta = b^3 / (2L (b^3 + 64 n^2))` for SAGA, and `beta = 1/(2L)` for the
/// full-batch estimator (half the respective cap with the simplified
/// majorant constants at `r = 3`).
///
/// Linear regime: `beta = beta_bar` from the strongly quasi-monotone
/// analysis, requiring `sigma > 0`, `2 rho < 1` and a nonnegative
/// discriminant `N^2 + 12 rho M`.
pub fn plan_step_size(
    kind: &EstimatorKind,
    n: usize,
    l: f64,
    sigma: Option<f64>,
    regime: Regime,
) -> Result<StepSizePlan, ScheduleError> {
    match regime {
        Regime::Sublinear => {
            let (beta, provenance) = match *kind {
                EstimatorKind::FullBatch => (1.0 / (2.0 * l), "full-batch beta = 1/(2L)"),
                EstimatorKind::LooplessSvrg { batch, switch_prob } => {
                    let bp2 = batch as f64 * switch_prob * switch_prob;
                    (bp2 / (2.0 * l * (bp2 + 64.0)), "svrg beta = b p^2 / (2L (b p^2 + 64))")
                }
                EstimatorKind::Saga { batch } => {
                    let b3 = (batch as f64).powi(3);
                    let n2 = (n as f64) * (n as f64);
                    (b3 / (2.0 * l * (b3 + 64.0 * n2)), "saga beta = b^3 / (2L (b^3 + 64 n^2))")
                }
            };
            let omega = sigma
                .filter(|s| *s > 0.0)
                .map(|s| 2.0 * beta * s / (3.0 + 4.0 * beta * s));
            Ok(StepSizePlan { beta, beta_bar: 2.0 * beta, regime, omega, provenance })
        }
        Regime::Linear => {
            let sigma = sigma.filter(|s| *s > 0.0).ok_or(ScheduleError::SigmaRequired)?;
            let consts = estimator_constants(kind, n, false);
            let beta_bar = linear_beta_bar(&consts, l, sigma)?;
            let beta = beta_bar;
            let omega = 2.0 * beta * sigma / (3.0 + 4.0 * beta * sigma);
            Ok(StepSizePlan {
                beta,
                beta_bar,
                regime,
                omega: Some(omega),
                provenance: "linear beta = beta_bar(rho, Theta, Theta_hat, kappa)",
            })
        }
    }
}

/// The strongly quasi-monotone step-size cap
/// `beta_bar = (1/sigma) min{3/5, 3rho/(2(1-2rho)), 1/(2 kappa),
/// 6 rho / (N + sqrt(N^2 + 12 rho M))}` with
/// `Gamma = rho + 2(Theta + Theta_hat)`, `M = 2(2 Gamma - 1) kappa`,
/// `N = 3 Gamma kappa + 2(1 - 2 rho)`.
pub fn linear_beta_bar(
    consts: &EstimatorConstants,
    l: f64,
    sigma: f64,
) -> Result<f64, ScheduleError> {
    let rho = consts.rho;
    if 2.0 * rho >= 1.0 {
        return Err(ScheduleError::RhoTooLarge { two_rho: 2.0 * rho });
    }
    let kappa = l / sigma;
    let gamma_c = rho + 2.0 * (consts.theta + consts.theta_hat);
    let m = 2.0 * (2.0 * gamma_c - 1.0) * kappa;
    let n_c = 3.0 * gamma_c * kappa + 2.0 * (1.0 - 2.0 * rho);
    let disc = n_c * n_c + 12.0 * rho * m;
    if disc < 0.0 {
        return Err(ScheduleError::NegativeDiscriminant { value: disc });
    }
    let candidates = [
        0.6,
        3.0 * rho / (2.0 * (1.0 - 2.0 * rho)),
        1.0 / (2.0 * kappa),
        6.0 * rho / (n_c + disc.sqrt()),
    ];
    let min = candidates.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(min / sigma)
}

/// Contraction exponent of the linear regime.
pub fn linear_omega(beta: f64, sigma: f64) -> f64 {
    2.0 * beta * sigma / (3.0 + 4.0 * beta * sigma)
}
