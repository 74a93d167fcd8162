//! Finite-sum affine operator problems.
//!
//! A problem is a collection of `n` affine maps `G_i x = M_i x + g_i` on
//! `R^p` together with their cached mean `G x = M x + g`. The module also
//! certifies the co-coercivity constant `L` and the strong quasi-monotonicity
//! modulus `sigma` that every step-size formula in the solver depends on, and
//! generates the synthetic block-structured minimax instances used by the
//! experiment harness.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use thiserror::Error;

/// Errors raised by problem construction, certification and generation.
#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("component index {index} out of range (n = {n})")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty component list")]
    EmptyProblem,
    #[error("not co-coercive: a null direction of sym(G) carries component energy {energy:.3e}")]
    NotCocoercive { energy: f64 },
    #[error("symmetric part of the mean operator has negative eigenvalue {eig:.3e}")]
    IndefiniteSymmetricPart { eig: f64 },
    #[error("singular mean operator (condition estimate {cond:.3e})")]
    SingularSystem { cond: f64 },
    #[error("instance generation exhausted {retries} retries")]
    GenerationExhausted { retries: usize },
}

/// Counts component evaluations `G_i x` consumed by a solver.
///
/// Diagnostic evaluations (residual reporting, Lyapunov terms) never touch
/// the counter; only work requested by the algorithm is billed.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OracleCounter {
    count: u64,
}

impl OracleCounter {
    pub fn new() -> Self {
        Self { count: 0 }
    }

    #[inline]
    pub fn add(&mut self, calls: u64) {
        self.count += calls;
    }

    #[inline]
    pub fn count(&self) -> u64 {
        self.count
    }

    /// One epoch = `n` component evaluations.
    pub fn epochs(&self, n: usize) -> f64 {
        self.count as f64 / n as f64
    }
}

/// How the co-coercivity constant was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CertificationMethod {
    ExactEigen,
    PowerIteration,
}

/// Certified constants of a finite-sum problem.
///
/// `l` is the smallest constant such that for all directions `d`
/// `<sym(M) d, d> >= (1/l) * (1/n) sum_i |M_i d|^2`, and `sigma` is the
/// smallest eigenvalue of `sym(M)` (zero when the symmetric part is
/// singular). For affine problems `sigma <= l` always holds.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct CocoercivityCertificate {
    pub l: f64,
    pub sigma: f64,
    pub method: CertificationMethod,
    /// Largest component energy found on null directions of `sym(M)`
    /// (zero when the symmetric part has full rank).
    pub residual: f64,
}

impl CocoercivityCertificate {
    /// Condition number `kappa = L / sigma`; infinite when `sigma = 0`.
    pub fn kappa(&self) -> f64 {
        if self.sigma > 0.0 {
            self.l / self.sigma
        } else {
            f64::INFINITY
        }
    }
}

/// Specification for a synthetic two-block minimax instance.
///
/// Each component is `M_i = [[A_i, L_i], [-L_i^T, B_i]]` with `A_i`, `B_i`
/// symmetric positive semidefinite built from clipped standard-normal
/// spectra, `L_i` dense standard normal, and offsets `g_i = [b_i; c_i]`
/// standard normal.
#[derive(Debug, Clone, Copy)]
pub struct MinimaxSpec {
    pub p1: usize,
    pub p2: usize,
    pub n: usize,
    pub seed: u64,
    /// Lower clip for the diagonal spectra. Zero reproduces the plain
    /// `max{d, 0}` clipping; a positive floor makes every component
    /// individually co-coercive (needed by the inclusion pipeline).
    pub psd_floor: f64,
    /// Scale applied to the off-diagonal coupling blocks `L_i`.
    pub coupling_scale: f64,
}

impl MinimaxSpec {
    pub fn new(p1: usize, p2: usize, n: usize, seed: u64) -> Self {
        Self { p1, p2, n, seed, psd_floor: 0.0, coupling_scale: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.p1 + self.p2
    }
}

/// A finite-sum affine problem `G x = (1/n) sum_i (M_i x + g_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSumProblem {
    matrices: Vec<DMatrix<f64>>,
    offsets: Vec<DVector<f64>>,
    mean_matrix: DMatrix<f64>,
    mean_offset: DVector<f64>,
    seed: Option<u64>,
    block_dims: Option<(usize, usize)>,
}

impl FiniteSumProblem {
    /// Builds a problem from component matrices and offsets, caching the
    /// arithmetic means.
    pub fn from_parts(
        matrices: Vec<DMatrix<f64>>,
        offsets: Vec<DVector<f64>>,
    ) -> Result<Self, OperatorError> {
        if matrices.is_empty() || matrices.len() != offsets.len() {
            return Err(OperatorError::EmptyProblem);
        }
        let p = matrices[0].nrows();
        for m in &matrices {
            if m.nrows() != p || m.ncols() != p {
                return Err(OperatorError::DimensionMismatch { expected: p, got: m.nrows() });
            }
        }
        for g in &offsets {
            if g.len() != p {
                return Err(OperatorError::DimensionMismatch { expected: p, got: g.len() });
            }
        }
        let n = matrices.len() as f64;
        let mut mean_matrix = DMatrix::zeros(p, p);
        for m in &matrices {
            mean_matrix += m;
        }
        mean_matrix /= n;
        let mut mean_offset = DVector::zeros(p);
        for g in &offsets {
            mean_offset += g;
        }
        mean_offset /= n;
        Ok(Self { matrices, offsets, mean_matrix, mean_offset, seed: None, block_dims: None })
    }

    pub fn n(&self) -> usize {
        self.matrices.len()
    }

    pub fn dim(&self) -> usize {
        self.mean_matrix.nrows()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn block_dims(&self) -> Option<(usize, usize)> {
        self.block_dims
    }

    pub(crate) fn set_provenance(&mut self, seed: u64, block_dims: (usize, usize)) {
        self.seed = Some(seed);
        self.block_dims = Some(block_dims);
    }

    pub fn component_matrix(&self, i: usize) -> &DMatrix<f64> {
        &self.matrices[i]
    }

    pub fn component_offset(&self, i: usize) -> &DVector<f64> {
        &self.offsets[i]
    }

    pub fn mean_matrix(&self) -> &DMatrix<f64> {
        &self.mean_matrix
    }

    pub fn mean_offset(&self) -> &DVector<f64> {
        &self.mean_offset
    }

    /// Evaluates one component `G_i x = M_i x + g_i`, billing one oracle
    /// call when a counter is supplied.
    pub fn eval_component(
        &self,
        i: usize,
        x: &DVector<f64>,
        counter: Option<&mut OracleCounter>,
    ) -> Result<DVector<f64>, OperatorError> {
        if i >= self.n() {
            return Err(OperatorError::IndexOutOfRange { index: i, n: self.n() });
        }
        if x.len() != self.dim() {
            return Err(OperatorError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if let Some(c) = counter {
            c.add(1);
        }
        Ok(&self.matrices[i] * x + &self.offsets[i])
    }

    /// Evaluates the mean operator `G x = M x + g` from the cached
    /// aggregates. When used as a solver oracle this bills `n` component
    /// evaluations; diagnostic callers pass `None`.
    pub fn eval_full(
        &self,
        x: &DVector<f64>,
        counter: Option<&mut OracleCounter>,
    ) -> Result<DVector<f64>, OperatorError> {
        if x.len() != self.dim() {
            return Err(OperatorError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if let Some(c) = counter {
            c.add(self.n() as u64);
        }
        Ok(&self.mean_matrix * x + &self.mean_offset)
    }

    /// Mean of the component evaluations `(1/n) sum_i G_i x`, computed
    /// component by component. Diagnostic only (never billed); used where
    /// the exact batch-law expectation is required.
    pub fn component_mean(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut acc = DVector::zeros(self.dim());
        for i in 0..self.n() {
            acc += &self.matrices[i] * x + &self.offsets[i];
        }
        acc / self.n() as f64
    }

    /// `U = (1/n) sum_i |G_i x - G_i y|^2`, the component displacement
    /// energy between two points. Diagnostic only.
    pub fn displacement_energy(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let d = x - y;
        let mut acc = 0.0;
        for m in &self.matrices {
            acc += (m * &d).norm_squared();
        }
        acc / self.n() as f64
    }

    /// Certifies the co-coercivity constant via the generalized eigenvalue
    /// pencil `(M, sym(G))` with `M = (1/n) sum_i M_i^T M_i`.
    pub fn certify_cocoercivity(
        &self,
        tol: f64,
    ) -> Result<CocoercivityCertificate, OperatorError> {
        self.certify_with(tol, CertificationMethod::ExactEigen)
    }

    /// Same as [`Self::certify_cocoercivity`] with an explicit method.
    pub fn certify_with(
        &self,
        tol: f64,
        method: CertificationMethod,
    ) -> Result<CocoercivityCertificate, OperatorError> {
        let p = self.dim();
        let sym = {
            let m = &self.mean_matrix;
            (m + m.transpose()) * 0.5
        };
        let mut second_moment = DMatrix::zeros(p, p);
        for m in &self.matrices {
            second_moment += m.transpose() * m;
        }
        second_moment /= self.n() as f64;

        let eig = sym.clone().symmetric_eigen();
        let s_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let scale = s_max.max(1.0);
        let psd_slack = tol.max(1e-12) * scale;
        let mut sigma = f64::INFINITY;
        for &s in eig.eigenvalues.iter() {
            if s < -psd_slack {
                return Err(OperatorError::IndefiniteSymmetricPart { eig: s });
            }
            sigma = sigma.min(s);
        }
        let sigma = sigma.max(0.0);

        // Null directions of sym(G) must carry no component energy,
        // otherwise L would be infinite.
        let rank_cut = 1e-12 * scale;
        let m_scale = second_moment.norm().max(1.0);
        let mut residual = 0.0f64;
        let mut reduced_cols = Vec::new();
        for (j, &s) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(j);
            if s <= rank_cut {
                let energy = (&second_moment * v).dot(&v.clone_owned());
                residual = residual.max(energy);
                if energy > tol.max(1e-12) * m_scale {
                    return Err(OperatorError::NotCocoercive { energy });
                }
            } else {
                reduced_cols.push((j, s));
            }
        }
        if reduced_cols.is_empty() {
            // sym(G) = 0 and M = 0: the operator is constant; L is
            // conventionally 0-free, report failure.
            return Err(OperatorError::NotCocoercive { energy: residual });
        }

        // Whitened pencil: A = W^T M W with W = V_+ diag(1/sqrt(s)).
        let r = reduced_cols.len();
        let mut w = DMatrix::zeros(p, r);
        for (col, &(j, s)) in reduced_cols.iter().enumerate() {
            let v = eig.eigenvectors.column(j) / s.sqrt();
            w.set_column(col, &v);
        }
        let reduced = w.transpose() * &second_moment * &w;
        let l = match method {
            CertificationMethod::ExactEigen => {
                let sym_reduced = (&reduced + reduced.transpose()) * 0.5;
                sym_reduced
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .cloned()
                    .fold(0.0f64, f64::max)
            }
            CertificationMethod::PowerIteration => power_iteration_lambda_max(&reduced),
        };
        if !(l > 0.0) || !l.is_finite() {
            return Err(OperatorError::NotCocoercive { energy: residual });
        }
        Ok(CocoercivityCertificate { l, sigma, method, residual })
    }

    /// Co-coercivity certificate of the mean operator alone (the pencil of
    /// the single map `G`), ignoring the component spread. This is the
    /// constant the experiment step sizes are quoted against; it is much
    /// smaller than the finite-sum constant whenever averaging cancels the
    /// component couplings.
    pub fn aggregate_cocoercivity(
        &self,
        tol: f64,
    ) -> Result<CocoercivityCertificate, OperatorError> {
        FiniteSumProblem::from_parts(vec![self.mean_matrix.clone()], vec![self.mean_offset.clone()])?
            .certify_cocoercivity(tol)
    }

    /// Dense solve of `M x = -g`; the returned point satisfies
    /// `|G x*| <= 1e-10 (1 + |g|)` or an error is raised.
    pub fn reference_solution(&self) -> Result<DVector<f64>, OperatorError> {
        let rhs = -&self.mean_offset;
        let lu = self.mean_matrix.clone().lu();
        let solved = lu.solve(&rhs);
        let cond = || {
            let svd = self.mean_matrix.clone().svd(false, false);
            let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
            let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
            if smin > 0.0 {
                smax / smin
            } else {
                f64::INFINITY
            }
        };
        match solved {
            Some(x) => {
                let res = (self.eval_full(&x, None)).expect("dims").norm();
                if res <= 1e-10 * (1.0 + self.mean_offset.norm()) {
                    Ok(x)
                } else {
                    Err(OperatorError::SingularSystem { cond: cond() })
                }
            }
            None => Err(OperatorError::SingularSystem { cond: cond() }),
        }
    }
}

fn power_iteration_lambda_max(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let av = a * &v;
        let norm = av.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = av / norm;
        let next_lambda = (a * &next).dot(&next);
        let done = (next_lambda - lambda).abs() <= 1e-13 * next_lambda.abs().max(1.0);
        v = next;
        lambda = next_lambda;
        if done {
            break;
        }
    }
    lambda
}

/// Draws a Haar-ish random orthonormal matrix from the QR factorization of
/// a standard normal matrix.
fn random_orthonormal(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let gauss = DMatrix::from_fn(m, m, |_, _| standard_normal(rng));
    gauss.qr().q()
}

#[inline]
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps us independent of rand_distr.
    loop {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

fn clipped_psd_block(rng: &mut ChaCha8Rng, m: usize, floor: f64) -> DMatrix<f64> {
    let q = random_orthonormal(rng, m);
    let d = DVector::from_fn(m, |_, _| standard_normal(rng).max(0.0).max(floor));
    &q * DMatrix::from_diagonal(&d) * q.transpose()
}

const GENERATION_RETRIES: usize = 10;
const OFFSET_RETRIES: usize = 10;

/// Generates a block-structured minimax instance.
///
/// Matrices are redrawn when the assembled mean operator fails the
/// co-coercivity certification, and offsets are redrawn when the linear
/// system `M x = -g` has no solution with relative residual <= 1e-8, so
/// every returned problem has a nonempty zero set and a finite `L`.
/// Deterministic given the spec seed.
pub fn generate_minimax(
    spec: &MinimaxSpec,
) -> Result<(FiniteSumProblem, CocoercivityCertificate), OperatorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = spec.dim();
    for _ in 0..GENERATION_RETRIES {
        let mut matrices = Vec::with_capacity(spec.n);
        for _ in 0..spec.n {
            let a = clipped_psd_block(&mut rng, spec.p1, spec.psd_floor);
            let b = clipped_psd_block(&mut rng, spec.p2, spec.psd_floor);
            let coupling =
                DMatrix::from_fn(spec.p1, spec.p2, |_, _| spec.coupling_scale * standard_normal(&mut rng));
            let mut m = DMatrix::zeros(p, p);
            m.view_mut((0, 0), (spec.p1, spec.p1)).copy_from(&a);
            m.view_mut((0, spec.p1), (spec.p1, spec.p2)).copy_from(&coupling);
            m.view_mut((spec.p1, 0), (spec.p2, spec.p1)).copy_from(&(-coupling.transpose()));
            m.view_mut((spec.p1, spec.p1), (spec.p2, spec.p2)).copy_from(&b);
            matrices.push(m);
        }

        for _ in 0..OFFSET_RETRIES {
            let offsets: Vec<DVector<f64>> = (0..spec.n)
                .map(|_| DVector::from_fn(p, |_, _| standard_normal(&mut rng)))
                .collect();
            let mut problem = FiniteSumProblem::from_parts(matrices.clone(), offsets)?;
            let cert = match problem.certify_cocoercivity(1e-8) {
                Ok(c) => c,
                Err(_) => break, // redraw matrices
            };
            if problem.reference_solution().is_ok() {
                problem.set_provenance(spec.seed, (spec.p1, spec.p2));
                return Ok((problem, cert));
            }
            // solvability failed: redraw offsets only
        }
    }
    Err(OperatorError::GenerationExhausted { retries: GENERATION_RETRIES })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_problem(p: usize) -> FiniteSumProblem {
        FiniteSumProblem::from_parts(vec![DMatrix::identity(p, p)], vec![DVector::zeros(p)])
            .unwrap()
    }

    #[test]
    fn component_eval_identity() {
        let prob = identity_problem(2);
        let x = DVector::from_vec(vec![3.0, -1.0]);
        let y = prob.eval_component(0, &x, None).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn component_eval_rotation() {
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let prob = FiniteSumProblem::from_parts(vec![rot], vec![DVector::zeros(2)]).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let y = prob.eval_component(0, &x, None).unwrap();
        assert_eq!(y, DVector::from_vec(vec![0.0, -1.0]));
    }

    #[test]
    fn component_eval_matches_direct_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = DMatrix::from_fn(2, 2, |_, _| standard_normal(&mut rng));
        let g = DVector::from_fn(2, |_, _| standard_normal(&mut rng));
        let x = DVector::from_fn(2, |_, _| standard_normal(&mut rng));
        let prob = FiniteSumProblem::from_parts(vec![m.clone()], vec![g.clone()]).unwrap();
        let got = prob.eval_component(0, &x, None).unwrap();
        // independently coded dense product
        let mut want = [0.0; 2];
        for r in 0..2 {
            let mut acc = g[r];
            for c in 0..2 {
                acc += m[(r, c)] * x[c];
            }
            want[r] = acc;
        }
        for r in 0..2 {
            assert!((got[r] - want[r]).abs() < 1e-14);
        }
    }

    #[test]
    fn eval_errors() {
        let prob = identity_problem(2);
        let x = DVector::zeros(2);
        assert!(matches!(
            prob.eval_component(5, &x, None),
            Err(OperatorError::IndexOutOfRange { .. })
        ));
        let bad = DVector::zeros(3);
        assert!(matches!(
            prob.eval_component(0, &bad, None),
            Err(OperatorError::DimensionMismatch { .. })
        ));
        assert!(matches!(prob.eval_full(&bad, None), Err(OperatorError::DimensionMismatch { .. })));
    }

    #[test]
    fn full_eval_single_summand_matches_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = DMatrix::from_fn(3, 3, |_, _| standard_normal(&mut rng));
        let g = DVector::from_fn(3, |_, _| standard_normal(&mut rng));
        let prob = FiniteSumProblem::from_parts(vec![m], vec![g]).unwrap();
        let x = DVector::from_fn(3, |_, _| standard_normal(&mut rng));
        let a = prob.eval_full(&x, None).unwrap();
        let b = prob.eval_component(0, &x, None).unwrap();
        assert!((a - b).norm() < 1e-14);
    }

    #[test]
    fn full_eval_mean_of_components() {
        let p = 1;
        let prob = FiniteSumProblem::from_parts(
            vec![DMatrix::from_element(p, p, 2.0), DMatrix::zeros(p, p)],
            vec![DVector::zeros(p), DVector::zeros(p)],
        )
        .unwrap();
        let x = DVector::from_element(p, 1.0);
        let y = prob.eval_full(&x, None).unwrap();
        assert_eq!(y[0], 1.0);
    }

    #[test]
    fn full_eval_vanishes_at_reference_solution() {
        let spec = MinimaxSpec::new(3, 2, 4, 99);
        let (prob, _) = generate_minimax(&spec).unwrap();
        let xstar = prob.reference_solution().unwrap();
        let res = prob.eval_full(&xstar, None).unwrap().norm();
        assert!(res <= 1e-10 * (1.0 + prob.mean_offset().norm()), "residual {res}");
    }

    #[test]
    fn oracle_counter_billing() {
        let prob = identity_problem(2);
        let x = DVector::zeros(2);
        let mut c = OracleCounter::new();
        prob.eval_component(0, &x, Some(&mut c)).unwrap();
        assert_eq!(c.count(), 1);
        prob.eval_full(&x, Some(&mut c)).unwrap();
        assert_eq!(c.count(), 2);
        prob.eval_full(&x, None).unwrap();
        assert_eq!(c.count(), 2);
    }

    #[test]
    fn certify_identity() {
        let prob = identity_problem(3);
        let cert = prob.certify_cocoercivity(1e-10).unwrap();
        assert!((cert.l - 1.0).abs() < 1e-10);
        assert!((cert.sigma - 1.0).abs() < 1e-10);
    }

    #[test]
    fn certify_pure_skew_fails() {
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let prob = FiniteSumProblem::from_parts(vec![rot], vec![DVector::zeros(2)]).unwrap();
        assert!(matches!(
            prob.certify_cocoercivity(1e-10),
            Err(OperatorError::NotCocoercive { .. })
        ));
    }

    #[test]
    fn certify_matches_random_rayleigh_oracle() {
        // L from the eigen pencil must dominate the Rayleigh quotient
        // (d' M d)/(d' sym d) over random unit directions and be attained
        // within 1% from below.
        let spec = MinimaxSpec::new(2, 2, 2, 5);
        let (prob, cert) = generate_minimax(&spec).unwrap();
        let p = prob.dim();
        let sym = (prob.mean_matrix() + prob.mean_matrix().transpose()) * 0.5;
        let mut second = DMatrix::zeros(p, p);
        for i in 0..prob.n() {
            let m = prob.component_matrix(i);
            second += m.transpose() * m;
        }
        second /= prob.n() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut best = 0.0f64;
        for _ in 0..100_000 {
            let d = DVector::from_fn(p, |_, _| standard_normal(&mut rng));
            let denom = (&sym * &d).dot(&d);
            if denom <= 1e-12 {
                continue;
            }
            let num = (&second * &d).dot(&d);
            best = best.max(num / denom);
        }
        assert!(best <= cert.l * (1.0 + 1e-9), "sampled {best} exceeds certified {}", cert.l);
        assert!(best >= cert.l * 0.99, "sampled {best} below 99% of certified {}", cert.l);
    }

    #[test]
    fn power_iteration_agrees_with_exact_eigen() {
        let spec = MinimaxSpec::new(3, 2, 3, 17);
        let (prob, cert) = generate_minimax(&spec).unwrap();
        let power = prob.certify_with(1e-8, CertificationMethod::PowerIteration).unwrap();
        assert!((power.l - cert.l).abs() <= 1e-6 * cert.l);
    }

    #[test]
    fn reference_solution_identity_offset() {
        let prob = FiniteSumProblem::from_parts(
            vec![DMatrix::identity(2, 2)],
            vec![DVector::from_vec(vec![1.0, 2.0])],
        )
        .unwrap();
        let x = prob.reference_solution().unwrap();
        assert!((x - DVector::from_vec(vec![-1.0, -2.0])).norm() < 1e-12);
    }

    #[test]
    fn reference_solution_singular_errors() {
        let prob = FiniteSumProblem::from_parts(
            vec![DMatrix::zeros(2, 2)],
            vec![DVector::from_vec(vec![1.0, 0.0])],
        )
        .unwrap();
        assert!(matches!(
            prob.reference_solution(),
            Err(OperatorError::SingularSystem { .. })
        ));
    }

    #[test]
    fn minimax_1x1_diagonal_nonnegative() {
        for seed in 0..8 {
            if let Ok((prob, _)) = generate_minimax(&MinimaxSpec::new(1, 1, 1, seed)) {
                let m = prob.component_matrix(0);
                assert!(m[(0, 0)] >= 0.0);
                assert!(m[(1, 1)] >= 0.0);
            }
        }
    }

    #[test]
    fn minimax_large_block_shape() {
        // the large experiment shape (p1 = 67, p2 = 33) assembles to a
        // p = 100 instance; a handful of summands keeps the test fast
        let (prob, cert) = generate_minimax(&MinimaxSpec::new(67, 33, 4, 6)).unwrap();
        assert_eq!(prob.dim(), 100);
        assert_eq!(prob.block_dims(), Some((67, 33)));
        assert!(cert.l.is_finite());
    }

    #[test]
    fn minimax_block_skew_coupling_exact() {
        let spec = MinimaxSpec::new(3, 2, 5, 21);
        let (prob, _) = generate_minimax(&spec).unwrap();
        for i in 0..prob.n() {
            let m = prob.component_matrix(i);
            let upper = m.view((0, 3), (3, 2)).clone_owned();
            let lower = m.view((3, 0), (2, 3)).clone_owned();
            assert_eq!(upper.transpose(), -lower);
        }
    }

    #[test]
    fn minimax_any_seed_certifies() {
        for seed in [0u64, 1, 2, 3, 1234, 98765] {
            let (_, cert) = generate_minimax(&MinimaxSpec::new(4, 3, 6, seed)).unwrap();
            assert!(cert.l.is_finite() && cert.l > 0.0);
            assert!(cert.sigma >= 0.0 && cert.sigma <= cert.l + 1e-9);
        }
    }

    #[test]
    fn minimax_determinism() {
        let spec = MinimaxSpec::new(3, 2, 4, 2024);
        let (a, _) = generate_minimax(&spec).unwrap();
        let (b, _) = generate_minimax(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampled_cocoercivity_and_lipschitz() {
        // eq-level invariants on sampled pairs: the finite-sum inequality
        // with certified L, the Lipschitz consequence, and the sigma lower
        // bound against the reference solution.
        let spec = MinimaxSpec::new(3, 2, 6, 31);
        let (prob, cert) = generate_minimax(&spec).unwrap();
        let xstar = prob.reference_solution().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let x = DVector::from_fn(prob.dim(), |_, _| standard_normal(&mut rng));
            let y = DVector::from_fn(prob.dim(), |_, _| standard_normal(&mut rng));
            let mut inner = 0.0;
            let mut energy = 0.0;
            for i in 0..prob.n() {
                let dx = prob.eval_component(i, &x, None).unwrap()
                    - prob.eval_component(i, &y, None).unwrap();
                inner += dx.dot(&(&x - &y));
                energy += dx.norm_squared();
            }
            inner /= prob.n() as f64;
            energy /= prob.n() as f64;
            assert!(inner >= energy / cert.l - 1e-8, "inner {inner} energy {energy}");

            let gd = prob.eval_full(&x, None).unwrap() - prob.eval_full(&y, None).unwrap();
            assert!(gd.norm() <= cert.l * (&x - &y).norm() + 1e-9);

            if cert.sigma > 0.0 {
                let gx = prob.eval_full(&x, None).unwrap();
                let lhs = gx.dot(&(&x - &xstar));
                assert!(lhs >= cert.sigma * (&x - &xstar).norm_squared() - 1e-8);
            }
        }
    }

    #[test]
    fn aggregate_constant_below_finite_sum_constant() {
        // Averaging cancels the couplings, so the mean-operator constant is
        // far below the finite-sum one on minimax instances.
        let spec = MinimaxSpec::new(4, 3, 200, 77);
        let (prob, cert) = generate_minimax(&spec).unwrap();
        let agg = prob.aggregate_cocoercivity(1e-8).unwrap();
        assert!(agg.l <= cert.l + 1e-12);
        assert!((agg.sigma - cert.sigma).abs() < 1e-9);
        // sampled aggregate co-coercivity with the aggregate constant
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let x = DVector::from_fn(prob.dim(), |_, _| standard_normal(&mut rng));
            let y = DVector::from_fn(prob.dim(), |_, _| standard_normal(&mut rng));
            let gd = prob.eval_full(&x, None).unwrap() - prob.eval_full(&y, None).unwrap();
            let inner = gd.dot(&(&x - &y));
            assert!(inner >= gd.norm_squared() / agg.l - 1e-8);
        }
    }

    #[test]
    fn mean_matrix_matches_componentwise_average() {
        let spec = MinimaxSpec::new(2, 2, 7, 55);
        let (prob, _) = generate_minimax(&spec).unwrap();
        let p = prob.dim();
        let mut mean = DMatrix::zeros(p, p);
        for i in 0..prob.n() {
            mean += prob.component_matrix(i);
        }
        mean /= prob.n() as f64;
        for r in 0..p {
            for c in 0..p {
                let a = prob.mean_matrix()[(r, c)];
                let b = mean[(r, c)];
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
