//! Closed-form convergence-rate constants and bounds.

use thiserror::Error;

use crate::estimators::EstimatorConstants;

#[derive(Debug, Error)]
pub enum RateError {
    #[error("beta {beta} >= beta_bar {beta_bar}: Lambda would be nonpositive")]
    BetaTooLarge { beta: f64, beta_bar: f64 },
    #[error("r must exceed 2, got {r}")]
    BadR { r: f64 },
}

/// Constants of the sublinear-rate analysis for a given `(r, beta, L)` and
/// estimator constants `(rho, Theta, Theta_hat)`:
///
/// `beta_bar = rho / ((rho + (r+1)(Theta + Theta_hat)) L)`
/// `Lambda   = 4 beta (rho - (rho + (r+1)(Theta + Theta_hat)) L beta) / (L rho (r+1))`
/// `psi      = 4 beta^2 (Theta + Theta_hat) / (rho Lambda)`
/// `C0 = r (1 + 3r + 8 r L^2 beta^2)`
/// `C1 = 4 r^2 (r-1) L^2 beta^2 / (r+2) + (2/r + psi) C0`
/// `C2 = 4 r^2 L^2 beta^2 + (psi + 2 (r+2)^2 / r) C0 + 4 (r+2)^2 C1 / (r (r-2))`
/// `C3 = (r+2)^2 (C1 + C2) / (2 r^2)`
#[derive(Debug, Clone, Copy)]
pub struct RateConstants {
    pub r: f64,
    pub beta: f64,
    pub l: f64,
    pub beta_bar: f64,
    pub lambda: f64,
    pub psi: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl RateConstants {
    pub fn new(
        r: f64,
        beta: f64,
        l: f64,
        est: &EstimatorConstants,
    ) -> Result<Self, RateError> {
        if !(r > 2.0) {
            return Err(RateError::BadR { r });
        }
        let rho = est.rho;
        let th = est.theta + est.theta_hat;
        let beta_bar = rho / ((rho + (r + 1.0) * th) * l);
        if beta >= beta_bar {
            return Err(RateError::BetaTooLarge { beta, beta_bar });
        }
        let lambda = 4.0 * beta * (rho - (rho + (r + 1.0) * th) * l * beta) / (l * rho * (r + 1.0));
        let psi = if th == 0.0 { 0.0 } else { 4.0 * beta * beta * th / (rho * lambda) };
        let lb2 = l * l * beta * beta;
        let c0 = r * (1.0 + 3.0 * r + 8.0 * r * lb2);
        let c1 = 4.0 * r * r * (r - 1.0) * lb2 / (r + 2.0) + (2.0 / r + psi) * c0;
        let c2 = 4.0 * r * r * lb2
            + (psi + 2.0 * (r + 2.0) * (r + 2.0) / r) * c0
            + 4.0 * (r + 2.0) * (r + 2.0) * c1 / (r * (r - 2.0));
        let c3 = (r + 2.0) * (r + 2.0) * (c1 + c2) / (2.0 * r * r);
        Ok(Self { r, beta, l, beta_bar, lambda, psi, c0, c1, c2, c3 })
    }

    /// Bound on `E |G x^k|^2`: `C3 R0^2 / (beta^2 (k+r-1)(k+r+2))`.
    pub fn residual_bound(&self, k: usize, r0_sq: f64) -> f64 {
        let kf = k as f64;
        self.c3 * r0_sq / (self.beta * self.beta * (kf + self.r - 1.0) * (kf + self.r + 2.0))
    }

    /// Bound on `E |x^{k+1} - x^k|^2`: `C2 R0^2 / (k+r+2)^2`.
    pub fn step_bound(&self, k: usize, r0_sq: f64) -> f64 {
        let kf = k as f64;
        self.c2 * r0_sq / ((kf + self.r + 2.0) * (kf + self.r + 2.0))
    }
}

/// Which quantity a rate bound refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Residual,
    Step,
}

/// Convenience wrapper returning one bound value.
pub fn rate_bound(
    k: usize,
    r: f64,
    beta: f64,
    l: f64,
    est: &EstimatorConstants,
    r0: f64,
    which: BoundKind,
) -> Result<f64, RateError> {
    let c = RateConstants::new(r, beta, l, est)?;
    Ok(match which {
        BoundKind::Residual => c.residual_bound(k, r0 * r0),
        BoundKind::Step => c.step_bound(k, r0 * r0),
    })
}

/// Linear-regime distance bound `4 (1 + 2 L^2 beta^2) (1 - omega)^k R0^2`.
pub fn linear_distance_bound(k: usize, l: f64, beta: f64, omega: f64, r0_sq: f64) -> f64 {
    4.0 * (1.0 + 2.0 * l * l * beta * beta) * (1.0 - omega).powi(k as i32) * r0_sq
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{estimator_constants, EstimatorKind};

    #[test]
    fn svrg_planned_constants_at_r3() {
        // Simplified constants with r = 3 and beta from the closed-form
        // formula stay under the published caps over the admissible grid.
        let l = 1.7;
        for &(b, p) in &[(4usize, 0.5f64), (32, 1.0 / 3.0), (128, 0.5), (16, 0.25)] {
            let bp2 = b as f64 * p * p;
            if !(1.0..=32.0).contains(&bp2) {
                continue;
            }
            let kind = EstimatorKind::LooplessSvrg { batch: b, switch_prob: p };
            let est = estimator_constants(&kind, 1000, true);
            let beta = bp2 / (2.0 * l * (bp2 + 64.0));
            let c = RateConstants::new(3.0, beta, l, &est).unwrap();
            assert!(beta >= 1.0 / (130.0 * l) - 1e-15 && beta <= 1.0 / (6.0 * l) + 1e-15);
            assert!((c.lambda - beta / (2.0 * l)).abs() <= 1e-12 * c.lambda);
            assert!((c.psi - 64.0 / (64.0 + bp2)).abs() < 1e-10);
            assert!(c.c0 <= 32.0);
            assert!(c.c1 <= 53.8);
            assert!(c.c2 <= 2360.0, "C2 = {}", c.c2);
            assert!(c.c3 <= 3353.0, "C3 = {}", c.c3);
        }
    }

    #[test]
    fn saga_planned_constants_at_r3() {
        let l = 0.9;
        for &(n, b) in &[(27usize, 1usize), (27, 9), (27, 27), (64, 16), (64, 64), (50, 33)] {
            let kind = EstimatorKind::Saga { batch: b };
            let est = estimator_constants(&kind, n, true);
            let b3 = (b as f64).powi(3);
            let n2 = (n as f64) * (n as f64);
            let beta = b3 / (2.0 * l * (b3 + 64.0 * n2));
            let c = RateConstants::new(3.0, beta, l, &est).unwrap();
            assert!(beta >= 1.0 / (2.0 * l * (1.0 + 64.0 * n2)) - 1e-18);
            assert!(beta <= 1.0 / (4.0 * l) + 1e-15);
            assert!(c.c2 <= 2559.0, "C2 = {} at n={n} b={b}", c.c2);
            assert!(c.c3 <= 3636.0, "C3 = {} at n={n} b={b}", c.c3);
        }
    }

    #[test]
    fn bound_monotone_and_rejects_large_beta() {
        let est = estimator_constants(&EstimatorKind::FullBatch, 1, false);
        let c = RateConstants::new(3.0, 0.4, 1.0, &est).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let b = c.residual_bound(k, 1.0);
            assert!(b < prev);
            prev = b;
        }
        // beta_bar for full batch is 1/L
        assert!(matches!(
            RateConstants::new(3.0, 1.0, 1.0, &est),
            Err(RateError::BetaTooLarge { .. })
        ));
    }

    #[test]
    fn residual_bound_vacuous_at_zero() {
        // at k = 0 the bound exceeds L^2 R0^2
        let est = estimator_constants(
            &EstimatorKind::LooplessSvrg { batch: 4, switch_prob: 0.5 },
            100,
            true,
        );
        let l = 2.0;
        let beta = 2.0 / (2.0 * l * 66.0);
        let c = RateConstants::new(3.0, beta, l, &est).unwrap();
        assert!(c.residual_bound(0, 1.0) > l * l);
    }
}
