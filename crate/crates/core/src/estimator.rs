//! Nuclear-norm penalized estimator for the completion basis.
//!
//! The objective is
//!
//! ```text
//! F(A) = ||A||_{L2(Pi)}^2 - <(2/n) sum_i Y_i X_i, A> + lambda ||A||_*
//! ```
//!
//! whose smooth part has the entrywise gradient `2 pi(j,k) A[j,k] - 2 Sbar[j,k]`
//! with `Sbar = (1/n) sum_i Y_i X_i`. The gradient map is Lipschitz with
//! constant `L = 2 max pi`, so accelerated proximal gradient with fixed step
//! `1/L` solves it; each prox step is singular-value soft-thresholding.
//!
//! Prox convention: with the full gradient above and step `s`, the iteration
//! is `A+ = svt_prox(A - s * grad, s * lambda)`, because `svt_prox(X, tau)`
//! minimizes `(1/2)||Z - X||_2^2 + tau ||Z||_*`. Under uniform sampling and
//! `s = 1/L = m1 m2 / 2` a single step lands on the closed-form solution
//! `svt_prox(m1 m2 Sbar, lambda m1 m2 / 2)`; the KKT and closed-form tests
//! pin this convention.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{
    generate_dataset, Dataset, Dimensions, GroundTruth, NoiseModel, PsiExponent,
    SamplingDistribution,
};

// ---------------------------------------------------------------------------
// Regularization
// ---------------------------------------------------------------------------

/// How the regularization parameter is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum LambdaRule {
    /// Use the given value as is.
    Explicit { lambda: f64 },
    /// High-probability rule
    /// `C (sigma v a) max{ sqrt((t+log m)/((m1^m2) n)),
    ///                     (t+log m) log^{1/beta}(m1^m2) / n }`.
    Theorem { c: f64, t: f64 },
    /// Rate-optimal simplification `C (sigma v a) sqrt(log m / ((m1^m2) n))`,
    /// valid once `n > (m1 v m2) log^{1+2/beta}(m)`.
    Optimal { c: f64 },
    /// Theorem rule with the constant produced by Monte Carlo calibration.
    Calibrated { c: f64, t: f64 },
}

/// A resolved regularization parameter plus the inputs that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizationSpec {
    pub rule: LambdaRule,
    /// The resolved value; always strictly positive.
    pub lambda: f64,
    /// Warning raised during resolution (e.g. optimal rule outside its
    /// validity region), if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl RegularizationSpec {
    pub fn explicit(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::param(format!("lambda must be > 0, got {lambda}")));
        }
        Ok(RegularizationSpec {
            rule: LambdaRule::Explicit { lambda },
            lambda,
            warning: None,
        })
    }
}

/// Evaluates the theorem rule for `lambda`.
pub fn theorem_rule_lambda(
    c: f64,
    sigma: f64,
    a: f64,
    dims: Dimensions,
    n: usize,
    t: f64,
    psi: PsiExponent,
) -> f64 {
    let scale = c * sigma.max(a);
    let m = dims.m_sum() as f64;
    let lead = t + m.ln();
    let first = (lead / (dims.min_dim() as f64 * n as f64)).sqrt();
    let second = lead * psi.log_factor(dims.min_dim() as f64) / n as f64;
    scale * first.max(second)
}

/// Evaluates the optimal rule for `lambda`.
pub fn optimal_rule_lambda(c: f64, sigma: f64, a: f64, dims: Dimensions, n: usize) -> f64 {
    let m = dims.m_sum() as f64;
    c * sigma.max(a) * (m.ln() / (dims.min_dim() as f64 * n as f64)).sqrt()
}

/// Validity region of the optimal rule: `n > (m1 v m2) log^{1+2/beta}(m)`.
pub fn optimal_rule_valid(dims: Dimensions, n: usize, psi: PsiExponent) -> bool {
    let m = dims.m_sum() as f64;
    let exponent = match psi {
        PsiExponent::Finite(beta) => 1.0 + 2.0 / beta,
        PsiExponent::Unbounded => 1.0,
    };
    (n as f64) > dims.max_dim() as f64 * m.ln().powf(exponent)
}

/// Resolves a [`LambdaRule`] into a [`RegularizationSpec`].
pub fn resolve_lambda(
    rule: LambdaRule,
    sigma: f64,
    a: f64,
    dims: Dimensions,
    n: usize,
    psi: PsiExponent,
) -> Result<RegularizationSpec> {
    let check_scales = |c: f64, t: f64| -> Result<()> {
        if !(c > 0.0) {
            return Err(Error::param(format!("constant C must be > 0, got {c}")));
        }
        if !(t > 0.0) {
            return Err(Error::param(format!("confidence t must be > 0, got {t}")));
        }
        if sigma < 0.0 || a < 0.0 {
            return Err(Error::param("sigma and a must be nonnegative"));
        }
        if sigma.max(a) <= 0.0 {
            return Err(Error::param("need sigma or a positive to scale lambda"));
        }
        Ok(())
    };
    let (lambda, warning) = match rule {
        LambdaRule::Explicit { lambda } => {
            return RegularizationSpec::explicit(lambda);
        }
        LambdaRule::Theorem { c, t } | LambdaRule::Calibrated { c, t } => {
            check_scales(c, t)?;
            (theorem_rule_lambda(c, sigma, a, dims, n, t, psi), None)
        }
        LambdaRule::Optimal { c } => {
            check_scales(c, 1.0)?;
            let warning = if optimal_rule_valid(dims, n, psi) {
                None
            } else {
                Some(format!(
                    "optimal rule outside validity region: n = {n} <= (m1 v m2) log^(1+2/beta)(m)"
                ))
            };
            (optimal_rule_lambda(c, sigma, a, dims, n), warning)
        }
    };
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::param(format!("resolved lambda {lambda} is not positive")));
    }
    Ok(RegularizationSpec {
        rule,
        lambda,
        warning,
    })
}

// ---------------------------------------------------------------------------
// Solver configuration and result
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    /// `1/L` with `L = 2 max pi`, exact for the diagonal smooth part.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub relative_objective_tolerance: f64,
    pub step_size: StepSize,
    pub acceleration: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 5000,
            relative_objective_tolerance: 1e-10,
            step_size: StepSize::Auto,
            acceleration: true,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations must be at least 1"));
        }
        if !(self.relative_objective_tolerance > 0.0) {
            return Err(Error::param("tolerance must be positive"));
        }
        if let StepSize::Fixed(s) = self.step_size {
            if !(s > 0.0) {
                return Err(Error::param("step size must be positive"));
            }
        }
        Ok(())
    }
}

/// Solver output: the estimate and the trace that certifies it.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub estimate: DMatrix<f64>,
    pub objective_trace: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    pub resolved_lambda: f64,
}

// ---------------------------------------------------------------------------
// Core operations
// ---------------------------------------------------------------------------

/// `Sbar = (1/n) sum_i Y_i X_i`, accumulated sparsely into a dense matrix.
pub fn empirical_moment(data: &Dataset) -> DMatrix<f64> {
    let dims = data.dims();
    let mut sbar = DMatrix::zeros(dims.m1(), dims.m2());
    let n = data.n() as f64;
    for obs in data.entries() {
        sbar[(obs.row, obs.col)] += obs.value / n;
    }
    sbar
}

/// The penalized objective at `A`.
pub fn objective(
    pi: &SamplingDistribution,
    data: &Dataset,
    a: &DMatrix<f64>,
    lambda: f64,
) -> Result<f64> {
    let sbar = empirical_moment(data);
    objective_with_moment(pi, &sbar, a, lambda)
}

/// Same, with a precomputed moment matrix.
pub fn objective_with_moment(
    pi: &SamplingDistribution,
    sbar: &DMatrix<f64>,
    a: &DMatrix<f64>,
    lambda: f64,
) -> Result<f64> {
    pi.check_shape(sbar)?;
    pi.check_shape(a)?;
    let quad = pi.l2pi_inner(a, a)?;
    let linear = 2.0 * linalg::trace_inner(sbar, a);
    Ok(quad - linear + lambda * linalg::nuclear_norm(a))
}

/// Gradient of the smooth part: `2 pi(j,k) A[j,k] - 2 Sbar[j,k]`.
pub fn smooth_gradient(
    pi: &SamplingDistribution,
    sbar: &DMatrix<f64>,
    a: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    pi.check_shape(sbar)?;
    pi.check_shape(a)?;
    Ok(DMatrix::from_fn(a.nrows(), a.ncols(), |j, k| {
        2.0 * pi.prob(j, k) * a[(j, k)] - 2.0 * sbar[(j, k)]
    }))
}

/// Soft-thresholds the singular values: the exact minimizer of
/// `(1/2)||Z - A||_2^2 + threshold ||Z||_*`.
pub fn svt_prox(a: &DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
    assert!(threshold >= 0.0, "threshold must be nonnegative");
    if threshold == 0.0 {
        return a.clone();
    }
    let (u, sigma, v) = linalg::svd_triple(a);
    let mut out = DMatrix::zeros(a.nrows(), a.ncols());
    for (k, &s) in sigma.iter().enumerate() {
        let shrunk = s - threshold;
        if shrunk > 0.0 {
            out += u.column(k) * v.column(k).transpose() * shrunk;
        }
    }
    out
}

/// Closed-form solution under uniform sampling:
/// `svt_prox(m1 m2 Sbar, lambda m1 m2 / 2)`.
///
/// Completing the square, the objective under `pi = 1/(m1 m2)` equals
/// `(1/(m1 m2)) ||A - m1 m2 Sbar||_2^2 + lambda ||A||_* + const`.
pub fn closed_form_uniform(data: &Dataset, dims: Dimensions, lambda: f64) -> DMatrix<f64> {
    let cells = dims.cells() as f64;
    let x = empirical_moment(data) * cells;
    svt_prox(&x, lambda * cells / 2.0)
}

/// Minimizes the penalized objective by accelerated proximal gradient.
///
/// Returns `converged = false` (with the best iterate found) if the relative
/// objective change never drops below the tolerance within the iteration
/// budget.
pub fn fit(
    pi: &SamplingDistribution,
    data: &Dataset,
    reg: &RegularizationSpec,
    config: &SolverConfig,
) -> Result<FitResult> {
    config.validate()?;
    if pi.dims() != data.dims() {
        return Err(Error::dims(pi.dims().to_string(), data.dims().to_string()));
    }
    if !(reg.lambda > 0.0) {
        return Err(Error::param("resolved lambda must be positive"));
    }
    let lambda = reg.lambda;
    let sbar = empirical_moment(data);
    let step = match config.step_size {
        StepSize::Auto => 1.0 / (2.0 * pi.max_prob()),
        StepSize::Fixed(s) => s,
    };

    let dims = pi.dims();
    let mut current = DMatrix::zeros(dims.m1(), dims.m2());
    let mut momentum = current.clone();
    let mut theta = 1.0_f64;
    let mut trace = Vec::with_capacity(config.max_iterations.min(1024) + 1);
    let mut f_prev = objective_with_moment(pi, &sbar, &current, lambda)?;
    trace.push(f_prev);
    let mut best = current.clone();
    let mut best_f = f_prev;
    let mut converged = false;
    let mut iterations_used = 0;

    for iter in 1..=config.max_iterations {
        iterations_used = iter;
        let grad = smooth_gradient(pi, &sbar, &momentum)?;
        let next = svt_prox(&(&momentum - &grad * step), step * lambda);
        let f_next = objective_with_moment(pi, &sbar, &next, lambda)?;
        if config.acceleration {
            if f_next > f_prev {
                // Function-value restart: drop the momentum that overshot.
                theta = 1.0;
                momentum = next.clone();
            } else {
                let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
                let beta = (theta - 1.0) / theta_next;
                momentum = &next + (&next - &current) * beta;
                theta = theta_next;
            }
        } else {
            momentum = next.clone();
        }
        trace.push(f_next);
        if f_next < best_f {
            best_f = f_next;
            best = next.clone();
        }
        let rel = (f_prev - f_next).abs() / f_next.abs().max(1.0);
        current = next;
        f_prev = f_next;
        if rel < config.relative_objective_tolerance {
            converged = true;
            break;
        }
    }

    let estimate = if converged { current } else { best };
    Ok(FitResult {
        estimate,
        objective_trace: trace,
        iterations_used,
        converged,
        resolved_lambda: lambda,
    })
}

/// Largest spectral norm of a subgradient residual at `a`:
/// `||grad_smooth(a)/lambda + UV^T||` restricted appropriately. Returns the
/// residual of the standard optimality test, small iff `a` is near-optimal.
///
/// At an exact minimizer there is `V` in `∂||A||_*` with
/// `grad_smooth + lambda V = 0`; equivalently `W = -grad_smooth/lambda`
/// satisfies `U_A^T W V_A = I` on the support and `||W|| <= 1`.
pub fn kkt_residual(
    pi: &SamplingDistribution,
    data: &Dataset,
    a: &DMatrix<f64>,
    lambda: f64,
) -> Result<f64> {
    let sbar = empirical_moment(data);
    let grad = smooth_gradient(pi, &sbar, a)?;
    let w = -&grad / lambda;
    let rank = linalg::numerical_rank(a, 1e-9);
    if rank == 0 {
        // Zero is optimal iff ||grad/lambda|| <= 1.
        return Ok((linalg::spectral_norm(&w) - 1.0).max(0.0));
    }
    let (u, sigma, v) = linalg::svd_triple(a);
    let smax = sigma.iter().copied().fold(0.0_f64, f64::max);
    let mut support_residual = 0.0_f64;
    for (k, &s) in sigma.iter().enumerate() {
        if s > 1e-9 * smax {
            // On the support, u_k^T W v_k must equal 1.
            let val = (u.column(k).transpose() * &w * v.column(k))[(0, 0)];
            support_residual = support_residual.max((val - 1.0).abs());
        }
    }
    let norm_excess = (linalg::spectral_norm(&w) - 1.0).max(0.0);
    Ok(support_residual.max(norm_excess))
}

// ---------------------------------------------------------------------------
// Lambda-constant calibration
// ---------------------------------------------------------------------------

/// Output of a constant calibration run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Calibration {
    /// The implied constant: theorem-rule lambda with this C equals the
    /// requested quantile of `3 ||M1 + M2||`.
    pub implied_c: f64,
    /// The raw quantile of `3 ||M1 + M2||` across trials.
    pub raw_quantile: f64,
    /// Theorem-rule lambda evaluated with `C = 1`.
    pub formula_value_c1: f64,
    pub trials: usize,
    pub quantile: f64,
    pub t: f64,
    pub seed: u64,
}

/// Empirical quantile with the "higher" convention: the smallest order
/// statistic `v` with `P_hat(X <= v) >= q`.
pub fn empirical_quantile(samples: &mut [f64], q: f64) -> f64 {
    assert!(!samples.is_empty());
    samples.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let idx = ((q * samples.len() as f64).ceil() as usize).clamp(1, samples.len()) - 1;
    samples[idx]
}

/// Monte Carlo estimate of the constant `C` that makes the theorem-rule
/// lambda dominate `3 ||M1 + M2||` with probability about `quantile`.
///
/// Runs `trials` synthetic draws against a fixed ground truth, takes the
/// requested empirical quantile of `3 ||M1 + M2||`, and divides by the
/// theorem-rule formula evaluated with `C = 1`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_lambda_constant(
    pi: &SamplingDistribution,
    truth: &GroundTruth,
    noise: &NoiseModel,
    n: usize,
    trials: usize,
    quantile: f64,
    t: f64,
    seed: u64,
) -> Result<Calibration> {
    if trials < 30 {
        return Err(Error::param("need at least 30 calibration trials"));
    }
    if !(quantile > 0.5 && quantile < 1.0) {
        return Err(Error::param("quantile must be in (0.5, 1)"));
    }
    let mut samples = Vec::with_capacity(trials);
    for trial in 0..trials {
        let trial_seed = crate::rng::mix_seed(seed, 0, trial as u64);
        let data = generate_dataset(pi, truth, noise, n, trial_seed)?;
        let (m1, m2) = crate::diagnostics::stochastic_errors(pi, &data, truth)?;
        samples.push(3.0 * linalg::spectral_norm(&(m1 + m2)));
    }
    let raw_quantile = empirical_quantile(&mut samples, quantile);
    let formula_value_c1 = theorem_rule_lambda(
        1.0,
        noise.sigma,
        truth.entry_bound(),
        pi.dims(),
        n,
        t,
        noise.psi_exponent(),
    );
    let implied_c = if raw_quantile == 0.0 {
        0.0
    } else if formula_value_c1 > 0.0 {
        raw_quantile / formula_value_c1
    } else {
        return Err(Error::param(
            "degenerate calibration: sigma = 0 and a = 0 but nonzero stochastic error",
        ));
    };
    Ok(Calibration {
        implied_c,
        raw_quantile,
        formula_value_c1,
        trials,
        quantile,
        t,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NoiseKind, Observation, TruthKind};
    use crate::rng::rng_from_seed;

    fn dims(m1: usize, m2: usize) -> Dimensions {
        Dimensions::new(m1, m2).unwrap()
    }

    fn dataset_from(entries: Vec<(usize, usize, f64)>, d: Dimensions) -> Dataset {
        let obs = entries
            .into_iter()
            .map(|(row, col, value)| Observation { row, col, value })
            .collect();
        Dataset::new(d, obs, None).unwrap()
    }

    fn random_instance(
        d: Dimensions,
        n: usize,
        sigma: f64,
        seed: u64,
    ) -> (SamplingDistribution, Dataset) {
        let pi = SamplingDistribution::uniform(d);
        let truth =
            GroundTruth::generate(TruthKind::RandomOrthonormal, d, 2.min(d.min_dim()), 1.0, seed)
                .unwrap();
        let noise = NoiseModel::gaussian(sigma).unwrap();
        let data = generate_dataset(&pi, &truth, &noise, n, seed).unwrap();
        (pi, data)
    }

    #[test]
    fn empirical_moment_cases() {
        let d = dims(2, 2);
        let single = dataset_from(vec![(0, 0, 2.0)], d);
        let m = empirical_moment(&single);
        assert_eq!(m[(0, 0)], 2.0);
        assert_eq!(m[(1, 1)], 0.0);

        let zeros = dataset_from(vec![(0, 1, 0.0), (1, 0, 0.0)], d);
        assert!(empirical_moment(&zeros).iter().all(|&v| v == 0.0));

        let dup = dataset_from(vec![(0, 0, 1.0), (0, 0, 3.0)], d);
        assert_eq!(empirical_moment(&dup)[(0, 0)], 2.0);
    }

    #[test]
    fn objective_cases() {
        let d = dims(2, 2);
        let pi = SamplingDistribution::uniform(d);
        let data = dataset_from(vec![(0, 0, 0.0)], d);
        let zero = DMatrix::zeros(2, 2);
        assert_eq!(objective(&pi, &data, &zero, 1.0).unwrap(), 0.0);

        // Identity, lambda = 1, Sbar = 0: 0.5 + 0 + 2 = 2.5.
        let eye = DMatrix::identity(2, 2);
        let f = objective(&pi, &data, &eye, 1.0).unwrap();
        assert!((f - 2.5).abs() < 1e-12);
    }

    #[test]
    fn objective_lambda_zero_direct() {
        let d = dims(3, 3);
        let (pi, data) = random_instance(d, 20, 0.5, 3);
        let mut rng = rng_from_seed(4);
        let a = crate::model::random_matrix(d, &mut rng);
        let f = objective(&pi, &data, &a, 0.0).unwrap();
        let sbar = empirical_moment(&data);
        let direct = a.norm_squared() / 9.0 - 2.0 * linalg::trace_inner(&sbar, &a);
        assert!((f - direct).abs() < 1e-12);
    }

    #[test]
    fn gradient_uniform_formula_and_finite_differences() {
        let d = dims(4, 4);
        let (pi, data) = random_instance(d, 30, 0.5, 5);
        let sbar = empirical_moment(&data);
        let mut rng = rng_from_seed(6);
        let a = crate::model::random_matrix(d, &mut rng);
        let g = smooth_gradient(&pi, &sbar, &a).unwrap();

        // Uniform sampling: G = (2/(m1 m2)) A - 2 Sbar.
        let expected = &a * (2.0 / 16.0) - &sbar * 2.0;
        assert!((&g - &expected).norm() < 1e-12);

        // Central differences on the smooth part along random directions.
        let smooth = |x: &DMatrix<f64>| -> f64 {
            pi.l2pi_inner(x, x).unwrap() - 2.0 * linalg::trace_inner(&sbar, x)
        };
        for _ in 0..5 {
            let dir = crate::model::random_matrix(d, &mut rng).normalize();
            let h = 1e-5;
            let fd = (smooth(&(&a + &dir * h)) - smooth(&(&a - &dir * h))) / (2.0 * h);
            let an = linalg::trace_inner(&g, &dir);
            assert!(
                (fd - an).abs() <= 1e-6 * an.abs().max(1.0),
                "fd {fd} vs analytic {an}"
            );
        }

        let empty_sbar = DMatrix::zeros(4, 4);
        let zero = DMatrix::zeros(4, 4);
        let g0 = smooth_gradient(&pi, &empty_sbar, &zero).unwrap();
        assert!(g0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn svt_prox_diag_and_identity() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0]));
        let out = svt_prox(&a, 2.0);
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0]));
        assert!((out - expected).norm() < 1e-12);

        let mut rng = rng_from_seed(7);
        let b = crate::model::random_matrix(dims(3, 4), &mut rng);
        assert_eq!(svt_prox(&b, 0.0), b);
        assert!(linalg::numerical_rank(&svt_prox(&b, 0.5), 1e-10) <= 3);
    }

    #[test]
    fn svt_prox_invariant_to_tied_singular_values() {
        // Orthogonal matrix has all singular values 1; shrinking by tau must
        // give (1 - tau) * A whatever basis the SVD picked.
        let theta = 0.3_f64;
        let a = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
        let out = svt_prox(&a, 0.25);
        assert!((out - &a * 0.75).norm() < 1e-12);
    }

    #[test]
    fn fit_zero_when_lambda_dominates() {
        let d = dims(4, 5);
        let (pi, data) = random_instance(d, 40, 0.5, 11);
        let sbar = empirical_moment(&data);
        let lambda = 2.0 * linalg::spectral_norm(&sbar) * 1.01;
        let reg = RegularizationSpec::explicit(lambda).unwrap();
        let out = fit(&pi, &data, &reg, &SolverConfig::default()).unwrap();
        assert!(out.converged);
        assert!(out.estimate.norm() < 1e-12, "norm {}", out.estimate.norm());
        // And the KKT zero condition is tight: slightly smaller lambda is nonzero.
        let reg2 = RegularizationSpec::explicit(lambda / 1.2).unwrap();
        let out2 = fit(&pi, &data, &reg2, &SolverConfig::default()).unwrap();
        assert!(out2.estimate.norm() > 0.0);
    }

    #[test]
    fn fit_matches_closed_form_uniform() {
        let d = dims(20, 30);
        let pi = SamplingDistribution::uniform(d);
        let truth = GroundTruth::generate(TruthKind::RandomOrthonormal, d, 2, 1.0, 21).unwrap();
        let noise = NoiseModel::gaussian(0.5).unwrap();
        let data = generate_dataset(&pi, &truth, &noise, 400, 22).unwrap();
        let reg = RegularizationSpec::explicit(0.02).unwrap();
        let out = fit(&pi, &data, &reg, &SolverConfig::default()).unwrap();
        let closed = closed_form_uniform(&data, d, 0.02);
        let rel = (&out.estimate - &closed).norm() / closed.norm().max(1e-12);
        assert!(rel < 1e-6, "relative error {rel}");
        assert!(out.converged);
    }

    #[test]
    fn closed_form_edge_cases() {
        let d = dims(3, 3);
        let data = dataset_from(vec![(0, 0, 0.0), (1, 1, 0.0)], d);
        assert!(closed_form_uniform(&data, d, 0.5).norm() == 0.0);

        let data2 = dataset_from(vec![(0, 1, 2.0), (2, 2, -1.0)], d);
        let unshrunk = closed_form_uniform(&data2, d, 0.0);
        let expected = empirical_moment(&data2) * 9.0;
        assert!((unshrunk - expected).norm() < 1e-12);
    }

    #[test]
    fn plain_proximal_gradient_is_monotone() {
        let d = dims(6, 5);
        let pi = SamplingDistribution::power_law(d, 1.0, 0.5, 0.05).unwrap();
        let truth = GroundTruth::generate(TruthKind::RandomOrthonormal, d, 2, 1.0, 31).unwrap();
        let noise = NoiseModel::gaussian(0.3).unwrap();
        let data = generate_dataset(&pi, &truth, &noise, 120, 32).unwrap();
        let reg = RegularizationSpec::explicit(0.01).unwrap();
        let config = SolverConfig {
            acceleration: false,
            ..SolverConfig::default()
        };
        let out = fit(&pi, &data, &reg, &config).unwrap();
        for w in out.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn fit_order_invariant() {
        let d = dims(5, 5);
        let (pi, data) = random_instance(d, 60, 0.4, 41);
        let reg = RegularizationSpec::explicit(0.05).unwrap();
        let out = fit(&pi, &data, &reg, &SolverConfig::default()).unwrap();

        let mut entries: Vec<Observation> = data.entries().to_vec();
        entries.reverse();
        let permuted = Dataset::new(d, entries, None).unwrap();
        let out2 = fit(&pi, &permuted, &reg, &SolverConfig::default()).unwrap();
        assert!((out.estimate - out2.estimate).norm() < 1e-12);
    }

    #[test]
    fn shrinkage_monotone_in_lambda() {
        let d = dims(6, 6);
        let (pi, data) = random_instance(d, 80, 0.5, 43);
        let mut last = f64::INFINITY;
        for lambda in [0.005, 0.01, 0.02, 0.05, 0.1] {
            let reg = RegularizationSpec::explicit(lambda).unwrap();
            let out = fit(&pi, &data, &reg, &SolverConfig::default()).unwrap();
            let nn = linalg::nuclear_norm(&out.estimate);
            assert!(nn <= last + 1e-9, "nuclear norm grew: {last} -> {nn}");
            last = nn;
        }
    }

    #[test]
    fn kkt_residual_small_at_optimum() {
        let d = dims(5, 4);
        let pi = SamplingDistribution::power_law(d, 0.8, 0.3, 0.1).unwrap();
        let truth = GroundTruth::generate(TruthKind::RandomOrthonormal, d, 2, 1.0, 51).unwrap();
        let noise = NoiseModel::gaussian(0.2).unwrap();
        let data = generate_dataset(&pi, &truth, &noise, 200, 52).unwrap();
        let reg = RegularizationSpec::explicit(0.02).unwrap();
        let config = SolverConfig {
            relative_objective_tolerance: 1e-13,
            max_iterations: 20_000,
            ..SolverConfig::default()
        };
        let out = fit(&pi, &data, &reg, &config).unwrap();
        let res = kkt_residual(&pi, &data, &out.estimate, 0.02).unwrap();
        assert!(res < 1e-5, "KKT residual {res}");
    }

    #[test]
    fn resolve_lambda_reference_value() {
        // Optimal rule: sigma=1, a=0.5, C=2, m1=m2=100, n=1e4
        // -> 2 * sqrt(log 200 / 1e6) = 4.6036e-3.
        let d = dims(100, 100);
        let spec = resolve_lambda(
            LambdaRule::Optimal { c: 2.0 },
            1.0,
            0.5,
            d,
            10_000,
            PsiExponent::Finite(2.0),
        )
        .unwrap();
        assert!((spec.lambda - 4.6036e-3).abs() < 1e-6, "{}", spec.lambda);
        // n = 1e4 > 100 * log^2(200) ~ 2808, so no warning.
        assert!(spec.warning.is_none());
    }

    #[test]
    fn theorem_rule_second_branch_dominates_for_large_t() {
        let d = dims(50, 60);
        let n = 10_000;
        let psi = PsiExponent::Finite(2.0);
        // At small t the sqrt branch wins; at huge t the linear branch wins.
        let small = theorem_rule_lambda(1.0, 1.0, 1.0, d, n, 1.0, psi);
        let m = d.m_sum() as f64;
        let sqrt_branch = ((1.0 + m.ln()) / (50.0 * n as f64)).sqrt();
        assert!((small - sqrt_branch).abs() < 1e-12);
        let t_big = 1e6;
        let big = theorem_rule_lambda(1.0, 1.0, 1.0, d, n, t_big, psi);
        let lin_branch = (t_big + m.ln()) * (50.0_f64).ln().sqrt() / n as f64;
        assert!((big - lin_branch).abs() < 1e-9 * lin_branch);
    }

    #[test]
    fn lambda_symmetric_in_sigma_and_a() {
        let d = dims(30, 30);
        let psi = PsiExponent::Finite(2.0);
        let l1 = theorem_rule_lambda(1.5, 2.0, 1.0, d, 500, 3.0, psi);
        let l2 = theorem_rule_lambda(1.5, 1.0, 2.0, d, 500, 3.0, psi);
        assert_eq!(l1, l2);
    }

    #[test]
    fn optimal_rule_warns_outside_validity() {
        let d = dims(30, 30);
        let spec = resolve_lambda(
            LambdaRule::Optimal { c: 1.0 },
            1.0,
            1.0,
            d,
            100,
            PsiExponent::Finite(2.0),
        )
        .unwrap();
        assert!(spec.warning.is_some());
        assert!(resolve_lambda(
            LambdaRule::Theorem { c: -1.0, t: 3.0 },
            1.0,
            1.0,
            d,
            100,
            PsiExponent::Finite(2.0)
        )
        .is_err());
    }

    #[test]
    fn calibration_scales_with_sigma() {
        let d = dims(10, 10);
        let pi = SamplingDistribution::uniform(d);
        // A tiny truth so M2 is negligible and M1 drives the quantile.
        let truth =
            GroundTruth::generate(TruthKind::RandomOrthonormal, d, 1, 1e-9, 61).unwrap();
        let n1 = NoiseModel::new(NoiseKind::Gaussian, 1.0).unwrap();
        let n2 = NoiseModel::new(NoiseKind::Gaussian, 2.0).unwrap();
        let cal1 = calibrate_lambda_constant(&pi, &truth, &n1, 300, 64, 0.9, 3.0, 71).unwrap();
        let cal2 = calibrate_lambda_constant(&pi, &truth, &n2, 300, 64, 0.9, 3.0, 71).unwrap();
        let ratio = cal2.raw_quantile / cal1.raw_quantile;
        assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn calibration_degenerate_is_zero() {
        let d = dims(4, 4);
        let pi = SamplingDistribution::uniform(d);
        let truth = GroundTruth::zero(d);
        let noise = NoiseModel::gaussian(0.0).unwrap();
        // sigma = 0 and A0 = 0: M1 = M2 = 0 exactly, so the implied C is 0.
        let cal = calibrate_lambda_constant(&pi, &truth, &noise, 50, 32, 0.9, 3.0, 5).unwrap();
        assert_eq!(cal.implied_c, 0.0);
    }

    #[test]
    fn empirical_quantile_convention() {
        let mut xs = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(empirical_quantile(&mut xs, 0.9), 9.0);
        assert_eq!(empirical_quantile(&mut xs, 0.95), 10.0);
    }
}
