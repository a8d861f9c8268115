//! Consensus ADMM for the multi-agent complex LASSO
//!
//! ```text
//! min  Σ_s ‖y_s − Φ_s z_s‖² + α‖z_G‖₁   s.t.  z_s = z_G
//! ```
//!
//! Each round runs every local ridge solve, one global soft-threshold and
//! every dual ascent step. The local step is the closed form
//! `(Φ^HΦ + βI)⁻¹(Φ^H y + β z_G − γ_s)`, which is the exact minimizer of the
//! augmented Lagrangian when the data term is scaled by ½; the iteration
//! therefore converges to the minimizer of `½Σ_s‖y_s − Φ_s z‖² + α‖z‖₁`
//! (see [`effective_objective`]).
//!
//! [`oracle_lasso`] is an independent accelerated proximal-gradient solver
//! used to validate the ADMM path.

use nalgebra::{Cholesky, Dyn};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sensing::SensingProblem;
use crate::{invalid, CMatrix, CVector, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmmParams {
    /// Sparsity weight α.
    pub alpha: f64,
    /// Penalty β.
    pub beta: f64,
    pub iterations: usize,
    /// Optional early stop on (primal, dual) residual tolerances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<(f64, f64)>,
}

impl AdmmParams {
    pub fn new(alpha: f64, beta: f64, iterations: usize) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            iterations,
            tolerance: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(invalid("ADMM requires alpha > 0 and beta > 0"));
        }
        if self.iterations == 0 {
            return Err(invalid("ADMM requires at least one iteration"));
        }
        Ok(())
    }
}

impl Default for AdmmParams {
    fn default() -> Self {
        Self {
            alpha: 1.8,
            beta: 100.0,
            iterations: 50,
            tolerance: None,
        }
    }
}

/// Factorized local subproblem of one sensing APU.
pub struct LocalSolver {
    factor: Cholesky<Complex64, Dyn>,
    /// Φ^H y
    correlation: CVector,
    beta: f64,
}

impl LocalSolver {
    pub fn new(problem: &SensingProblem, beta: f64) -> Result<Self> {
        if problem.matrix.nrows() != problem.observation.len() {
            return Err(Error::Dimension(format!(
                "Φ has {} rows but y has {} entries",
                problem.matrix.nrows(),
                problem.observation.len()
            )));
        }
        let mut gram = problem.matrix.ad_mul(&problem.matrix);
        for i in 0..gram.nrows() {
            gram[(i, i)] += Complex64::new(beta, 0.0);
        }
        let factor = Cholesky::new(gram)
            .ok_or_else(|| Error::Factorization("Gram-plus-ridge matrix is not positive definite".into()))?;
        Ok(Self {
            factor,
            correlation: problem.matrix.ad_mul(&problem.observation),
            beta,
        })
    }

    pub fn dim(&self) -> usize {
        self.correlation.len()
    }

    /// `z_s = (Φ^HΦ + βI)⁻¹(Φ^H y + β z_G − γ_s)`.
    pub fn local_update(&self, global: &CVector, dual: &CVector) -> CVector {
        let rhs = &self.correlation + global * Complex64::new(self.beta, 0.0) - dual;
        self.factor.solve(&rhs)
    }
}

/// Convenience wrapper that factorizes and solves once.
pub fn local_update(problem: &SensingProblem, global: &CVector, dual: &CVector, beta: f64) -> Result<CVector> {
    Ok(LocalSolver::new(problem, beta)?.local_update(global, dual))
}

/// Complex soft threshold `z ↦ (z/|z|)·max(|z| − κ, 0)`.
pub fn soft_threshold(z: Complex64, kappa: f64) -> Complex64 {
    let mag = z.norm();
    if mag <= kappa {
        Complex64::new(0.0, 0.0)
    } else {
        z * ((mag - kappa) / mag)
    }
}

pub fn soft_threshold_vec(v: &CVector, kappa: f64) -> CVector {
    v.map(|z| soft_threshold(z, kappa))
}

/// `z_G = S_{α/(βS)}((1/S)Σ z_s + (1/(βS))Σ γ_s)`.
///
/// The dual term enters with a plus sign: with the Lagrangian
/// `γ_s^H(z_s − z_G)`, the linear coefficient of `z_G` is `−(γ_s + β z_s)`.
pub fn global_update(locals: &[CVector], duals: &[CVector], alpha: f64, beta: f64) -> Result<CVector> {
    let agents = locals.len();
    if agents == 0 || duals.len() != agents {
        return Err(Error::Dimension("global update needs one dual per local (S >= 1)".into()));
    }
    let n = locals[0].len();
    let mut avg = CVector::zeros(n);
    for (z, g) in locals.iter().zip(duals) {
        avg += z + g / Complex64::new(beta, 0.0);
    }
    avg /= Complex64::new(agents as f64, 0.0);
    Ok(soft_threshold_vec(&avg, alpha / (beta * agents as f64)))
}

/// `γ_s ← γ_s + β(z_s − z_G)`.
pub fn dual_update(dual: &mut CVector, local: &CVector, global: &CVector, beta: f64) {
    *dual += (local - global) * Complex64::new(beta, 0.0);
}

pub fn l1_norm(z: &CVector) -> f64 {
    z.iter().map(|x| x.norm()).sum()
}

/// `Σ_s ‖y_s − Φ_s z‖² + α‖z‖₁`.
pub fn objective(problems: &[SensingProblem], z: &CVector, alpha: f64) -> f64 {
    problems
        .iter()
        .map(|p| (&p.observation - &p.matrix * z).norm_squared())
        .sum::<f64>()
        + alpha * l1_norm(z)
}

/// `½Σ_s ‖y_s − Φ_s z‖² + α‖z‖₁`, the problem the ADMM iterates minimize.
pub fn effective_objective(problems: &[SensingProblem], z: &CVector, alpha: f64) -> f64 {
    0.5 * objective(problems, z, 2.0 * alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub global: CVector,
    pub locals: Vec<CVector>,
    /// `Σ_s ‖z_s − z_G‖₂` at the final iteration.
    pub primal_residual: f64,
    /// `β√S‖z_G^{t+1} − z_G^t‖₂` at the final iteration.
    pub dual_residual: f64,
    pub iterations: usize,
    /// Objective `Σ_s‖y_s − Φ_s z_G‖² + α‖z_G‖₁` after each iteration.
    pub objective_trace: Vec<f64>,
    pub primal_trace: Vec<f64>,
}

pub fn solve(problems: &[SensingProblem], params: &AdmmParams) -> Result<SolveReport> {
    params.validate()?;
    let first = problems
        .first()
        .ok_or_else(|| invalid("consensus ADMM needs at least one sensing problem"))?;
    let dim = first.cols();
    if problems.iter().any(|p| p.cols() != dim) {
        return Err(Error::Dimension("all sensing problems must share the grid size".into()));
    }
    let solvers = problems
        .par_iter()
        .map(|p| LocalSolver::new(p, params.beta))
        .collect::<Result<Vec<_>>>()?;
    let agents = solvers.len();
    let beta = params.beta;

    let mut global = CVector::zeros(dim);
    let mut duals = vec![CVector::zeros(dim); agents];
    let mut locals = vec![CVector::zeros(dim); agents];
    let mut objective_trace = Vec::with_capacity(params.iterations);
    let mut primal_trace = Vec::with_capacity(params.iterations);
    let mut primal = 0.0;
    let mut dual_res = 0.0;
    let mut done = 0;

    for _ in 0..params.iterations {
        locals = solvers
            .par_iter()
            .zip(duals.par_iter())
            .map(|(s, g)| s.local_update(&global, g))
            .collect();
        let next = global_update(&locals, &duals, params.alpha, beta)?;
        for (g, z) in duals.iter_mut().zip(&locals) {
            dual_update(g, z, &next, beta);
        }
        primal = locals.iter().map(|z| (z - &next).norm()).sum();
        dual_res = beta * (agents as f64).sqrt() * (&next - &global).norm();
        global = next;
        done += 1;
        objective_trace.push(objective(problems, &global, params.alpha));
        primal_trace.push(primal);
        if let Some((tp, td)) = params.tolerance {
            if primal <= tp && dual_res <= td {
                break;
            }
        }
    }

    Ok(SolveReport {
        global,
        locals,
        primal_residual: primal,
        dual_residual: dual_res,
        iterations: done,
        objective_trace,
        primal_trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub z: CVector,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest eigenvalue of `Φ^HΦ` by power iteration.
pub fn max_gram_eigenvalue(phi: &CMatrix) -> f64 {
    let n = phi.ncols();
    if n == 0 || phi.nrows() == 0 {
        return 0.0;
    }
    let mut v = CVector::from_fn(n, |i, _| Complex64::new(1.0 + 0.01 * i as f64, 0.0));
    v /= Complex64::new(v.norm(), 0.0);
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w = phi.ad_mul(&(phi * &v));
        let next = w.norm();
        if next == 0.0 {
            return 0.0;
        }
        v = w / Complex64::new(next, 0.0);
        if (next - lambda).abs() <= 1e-14 * next {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Proximal gradient (FISTA with function-value restart) on
/// `‖y − Φz‖² + α‖z‖₁` with step `1/(2λ_max(Φ^HΦ))`.
///
/// Stops when the relative objective change of a step falls below `tol`;
/// hitting `max_iter` first is reported through `converged = false`.
pub fn oracle_lasso(phi: &CMatrix, y: &CVector, alpha: f64, max_iter: usize, tol: f64) -> Result<OracleResult> {
    if phi.nrows() != y.len() {
        return Err(Error::Dimension("Φ rows must match y".into()));
    }
    let n = phi.ncols();
    let f = |z: &CVector| (y - phi * z).norm_squared() + alpha * l1_norm(z);
    let lipschitz = 2.0 * max_gram_eigenvalue(phi);
    if lipschitz == 0.0 {
        let z = CVector::zeros(n);
        return Ok(OracleResult { objective: f(&z), z, iterations: 0, converged: true });
    }
    let step = 1.0 / lipschitz;
    let phi_h_y = phi.ad_mul(y);

    let mut z = CVector::zeros(n);
    let mut extrap = z.clone();
    let mut momentum = 1.0f64;
    let mut obj = f(&z);
    for it in 1..=max_iter {
        let grad = (phi.ad_mul(&(phi * &extrap)) - &phi_h_y) * Complex64::new(2.0, 0.0);
        let next = soft_threshold_vec(&(&extrap - grad * Complex64::new(step, 0.0)), alpha * step);
        let next_obj = f(&next);
        if next_obj > obj {
            // restart from the last accepted iterate
            extrap = z.clone();
            momentum = 1.0;
            continue;
        }
        let change = (obj - next_obj).abs() / obj.abs().max(f64::MIN_POSITIVE);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        extrap = &next + (&next - &z) * Complex64::new((momentum - 1.0) / t_next, 0.0);
        momentum = t_next;
        z = next;
        obj = next_obj;
        if change < tol {
            return Ok(OracleResult { z, objective: obj, iterations: it, converged: true });
        }
    }
    Ok(OracleResult { z, objective: obj, iterations: max_iter, converged: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn problem(matrix: CMatrix, observation: CVector) -> SensingProblem {
        SensingProblem { apu_index: 0, matrix, observation, subcarriers: vec![] }
    }

    fn random_problem(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> SensingProblem {
        let mut g = || c(rng.sample(StandardNormal), rng.sample(StandardNormal));
        let phi = CMatrix::from_fn(rows, cols, |_, _| g());
        let y = CVector::from_fn(rows, |_, _| g());
        problem(phi, y)
    }

    #[test]
    fn local_update_with_zero_operator() {
        let p = problem(CMatrix::zeros(3, 4), CVector::from_element(3, c(1.0, 2.0)));
        let zg = CVector::from_fn(4, |i, _| c(i as f64, -1.0));
        let g = CVector::from_fn(4, |i, _| c(0.5, i as f64));
        let z = local_update(&p, &zg, &g, 2.0).unwrap();
        let want = &zg - &g / c(2.0, 0.0);
        assert!((z - want).norm() < 1e-14);
    }

    #[test]
    fn local_update_scalar() {
        let p = problem(CMatrix::from_element(1, 1, c(1.0, 0.0)), CVector::from_element(1, c(1.0, 0.0)));
        let z = local_update(&p, &CVector::zeros(1), &CVector::zeros(1), 1.0).unwrap();
        assert_abs_diff_eq!(z[0].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(z[0].im, 0.0);
    }

    #[test]
    fn local_update_solves_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_problem(&mut rng, 12, 30);
        let zg = CVector::from_fn(30, |i, _| c((i as f64).sin(), 0.3));
        let g = CVector::from_fn(30, |i, _| c(0.1, (i as f64).cos()));
        let beta = 0.7;
        let z = local_update(&p, &zg, &g, beta).unwrap();
        let rhs = p.matrix.ad_mul(&p.observation) + &zg * c(beta, 0.0) - &g;
        let lhs = p.matrix.ad_mul(&(&p.matrix * &z)) + &z * c(beta, 0.0);
        assert!((lhs - &rhs).norm() < 1e-8 * rhs.norm());
    }

    #[test]
    fn soft_threshold_cases() {
        // S = 1, β = 1, α = 0.5, z = 2 → 1.5
        let z = global_update(&[CVector::from_element(1, c(2.0, 0.0))], &[CVector::zeros(1)], 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(z[0].re, 1.5, epsilon = 1e-12);
        assert_eq!(soft_threshold(c(0.3, 0.4), 0.5), c(0.0, 0.0));
        assert_eq!(soft_threshold(c(-0.2, 0.0), 0.5), c(0.0, 0.0));
        let s = soft_threshold(c(3.0, 4.0), 1.0);
        assert_abs_diff_eq!(s.re, 2.4, epsilon = 1e-12);
        assert_abs_diff_eq!(s.im, 3.2, epsilon = 1e-12);
        let neg = soft_threshold(c(-2.0, 0.0), 0.5);
        assert_abs_diff_eq!(neg.re, -1.5, epsilon = 1e-12);
    }

    #[test]
    fn global_update_averages_and_scales_threshold() {
        let locals = [CVector::from_element(1, c(1.0, 0.0)), CVector::from_element(1, c(3.0, 0.0))];
        let duals = [CVector::from_element(1, c(2.0, 0.0)), CVector::zeros(1)];
        // z̄ = 2 + 2/(4·2) = 2.25; κ = 1/(4·2) = 0.125
        let z = global_update(&locals, &duals, 1.0, 4.0).unwrap();
        assert_abs_diff_eq!(z[0].re, 2.125, epsilon = 1e-15);
        assert!(global_update(&[], &[], 1.0, 1.0).is_err());
    }

    #[test]
    fn dual_update_cases() {
        let v = CVector::from_fn(3, |i, _| c(i as f64, 1.0));
        let mut g = CVector::zeros(3);
        dual_update(&mut g, &v, &CVector::zeros(3), 2.0);
        assert_eq!(g, &v * c(2.0, 0.0));
        let before = g.clone();
        dual_update(&mut g, &v, &v, 2.0);
        assert_eq!(g, before);
    }

    #[test]
    fn zero_operator_solve_stays_zero() {
        let p = problem(CMatrix::zeros(4, 6), CVector::from_element(4, c(5.0, -1.0)));
        let r = solve(&[p.clone(), p], &AdmmParams::new(1.0, 1.0, 1).unwrap()).unwrap();
        assert_eq!(r.global, CVector::zeros(6));
        assert_eq!(r.primal_residual, 0.0);
    }

    #[test]
    fn objective_trend_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..3 {
            let probs: Vec<_> = (0..3).map(|_| random_problem(&mut rng, 10, 25)).collect();
            let r5 = solve(&probs, &AdmmParams::new(0.5, 5.0, 5).unwrap()).unwrap();
            let r50 = solve(&probs, &AdmmParams::new(0.5, 5.0, 50).unwrap()).unwrap();
            assert!(r50.objective_trace.last() <= r5.objective_trace.last());
        }
    }

    #[test]
    fn early_stop_respects_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let probs: Vec<_> = (0..2).map(|_| random_problem(&mut rng, 10, 8)).collect();
        let mut params = AdmmParams::new(0.1, 1.0, 5000).unwrap();
        params.tolerance = Some((1e-6, 1e-6));
        let r = solve(&probs, &params).unwrap();
        assert!(r.iterations < 5000);
        assert!(r.primal_residual <= 1e-6 && r.dual_residual <= 1e-6);
    }

    #[test]
    fn phase_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let probs: Vec<_> = (0..2).map(|_| random_problem(&mut rng, 8, 12)).collect();
        let rot = Complex64::cis(0.7);
        let rotated: Vec<_> = probs
            .iter()
            .map(|p| problem(p.matrix.clone(), &p.observation * rot))
            .collect();
        let params = AdmmParams::new(0.3, 2.0, 40).unwrap();
        let a = solve(&probs, &params).unwrap().global;
        let b = solve(&rotated, &params).unwrap().global;
        assert!((a * rot - &b).norm() < 1e-10 * b.norm().max(1.0));
    }

    #[test]
    fn determinism_across_thread_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let probs: Vec<_> = (0..4).map(|_| random_problem(&mut rng, 16, 20)).collect();
        let params = AdmmParams::new(0.3, 2.0, 30).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| solve(&probs, &params).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.global, b.global);
        assert_eq!(a.objective_trace, b.objective_trace);
    }

    #[test]
    fn oracle_scalar_closed_form() {
        // min (3 − z)² + 2|z| → z = 2
        let phi = CMatrix::identity(3, 3);
        let mut y = CVector::zeros(3);
        y[0] = c(3.0, 0.0);
        let r = oracle_lasso(&phi, &y, 2.0, 10_000, 1e-15).unwrap();
        assert_abs_diff_eq!(r.z[0].re, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.z[1].norm(), 0.0);

        let huge = oracle_lasso(&phi, &y, 1e6, 100, 1e-12).unwrap();
        assert_eq!(huge.z, CVector::zeros(3));
        let zero = oracle_lasso(&phi, &CVector::zeros(3), 1.0, 100, 1e-12).unwrap();
        assert_eq!(zero.z, CVector::zeros(3));
    }

    #[test]
    fn power_iteration_matches_diagonal() {
        let phi = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 3.0), c(2.0, 0.0)]));
        assert_abs_diff_eq!(max_gram_eigenvalue(&phi), 9.0, epsilon = 1e-9);
    }

    #[test]
    fn consensus_matches_oracle_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let probs: Vec<_> = (0..3).map(|_| random_problem(&mut rng, 6, 10)).collect();
        let alpha = 0.4;
        let admm = solve(&probs, &AdmmParams::new(alpha, 2.0, 3000).unwrap()).unwrap();
        // stack the agents into one LASSO; the ADMM data term carries ½
        let rows: usize = probs.iter().map(|p| p.rows()).sum();
        let mut phi = CMatrix::zeros(rows, 10);
        let mut y = CVector::zeros(rows);
        let mut r0 = 0;
        for p in &probs {
            phi.view_mut((r0, 0), (p.rows(), 10)).copy_from(&p.matrix);
            y.rows_mut(r0, p.rows()).copy_from(&p.observation);
            r0 += p.rows();
        }
        let oracle = oracle_lasso(&phi, &y, 2.0 * alpha, 200_000, 1e-15).unwrap();
        let f_admm = objective(&probs, &admm.global, 2.0 * alpha);
        assert!((f_admm - oracle.objective) / oracle.objective < 1e-6, "{f_admm} vs {}", oracle.objective);
    }

    fn cvec(n: usize) -> impl Strategy<Value = CVector> {
        proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64), n)
            .prop_map(|v| CVector::from_iterator(v.len(), v.into_iter().map(|(a, b)| c(a, b))))
    }

    proptest! {
        #[test]
        fn soft_threshold_is_nonexpansive(u in cvec(8), v in cvec(8), kappa in 0.0..3.0f64) {
            let d = (soft_threshold_vec(&u, kappa) - soft_threshold_vec(&v, kappa)).norm();
            prop_assert!(d <= (&u - &v).norm() + 1e-12);
        }

        #[test]
        fn soft_threshold_shrinks_magnitude_by_kappa(re in -5.0..5.0f64, im in -5.0..5.0f64, kappa in 0.0..3.0f64) {
            let z = c(re, im);
            let s = soft_threshold(z, kappa);
            prop_assert!((s.norm() - (z.norm() - kappa).max(0.0)).abs() < 1e-12);
        }
    }
}
