//! Incoherence and distortion diagnostics for a sampling distribution, the
//! projector/cone algebra around a low-rank target, the stochastic error
//! matrices, and the matrix-Bernstein deviation bounds.
//!
//! The distortion constants have closed forms on the completion basis:
//! for rank-one `B = u v^T` with unit Frobenius norm,
//! `||B||_{L2(Pi)}^2 = sum pi(j,k) u_j^2 v_k^2` is a bilinear form over the
//! product of two probability simplices (in `u^2` and `v^2`), so its
//! extrema sit at vertices and equal `min pi` / `max pi`. Higher rank does
//! not help: `min pi <= ||B||^2_{L2(Pi)} / ||B||_2^2 <= max pi` for every
//! matrix. The optimization-based estimates are kept as cross-check oracles.
//!
//! The coherence measure `rho` and the restricted constant `mu_{c0}` are
//! suprema over continua; the searches below report lower bounds (witness
//! values), never certificates, except under uniform sampling where `rho`
//! is exactly zero.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, nuclear_norm, spectral_norm, trace_inner};
use crate::model::{
    random_matrix, Dataset, GroundTruth, NoiseModel, PsiExponent, SamplingDistribution,
};
use crate::rng::{self, streams};

// ---------------------------------------------------------------------------
// Distortion constants
// ---------------------------------------------------------------------------

/// Closed-form `(kappa_1, kappa_1') = (sqrt(min pi), sqrt(max pi))`.
pub fn kappa1(pi: &SamplingDistribution) -> (f64, f64) {
    (pi.min_prob().sqrt(), pi.max_prob().sqrt())
}

/// Alternating-search estimates `(kappa_r upper bound, kappa_r' lower bound)`.
///
/// Block-coordinate updates of the factored rank-one objective are exact and
/// land on basis vectors, so the search walks cells of the grid: fix the
/// column, the best row is `argmin_j pi(j, k)` (or argmax), and vice versa.
/// Every cell is used as a start when the grid is small, plus `restarts`
/// random starts. Rank `r > 1` cannot improve either extremum, so the walk
/// is shared across ranks.
pub fn kappa_r_heuristic(
    pi: &SamplingDistribution,
    r: usize,
    restarts: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let dims = pi.dims();
    if r == 0 || r > dims.min_dim() {
        return Err(Error::param(format!(
            "rank must be in 1..={}, got {r}",
            dims.min_dim()
        )));
    }
    let walk = |start: (usize, usize), minimize: bool| -> f64 {
        let (mut j, mut k) = start;
        for _ in 0..dims.m_sum() {
            let pick_row = (0..dims.m1())
                .map(|jj| (jj, pi.prob(jj, k)))
                .fold((j, pi.prob(j, k)), |best, cand| {
                    let better = if minimize {
                        cand.1 < best.1
                    } else {
                        cand.1 > best.1
                    };
                    if better {
                        cand
                    } else {
                        best
                    }
                });
            let pick_col = (0..dims.m2())
                .map(|kk| (kk, pi.prob(pick_row.0, kk)))
                .fold(
                    (k, pi.prob(pick_row.0, k)),
                    |best, cand| {
                        let better = if minimize {
                            cand.1 < best.1
                        } else {
                            cand.1 > best.1
                        };
                        if better {
                            cand
                        } else {
                            best
                        }
                    },
                );
            if pick_row.0 == j && pick_col.0 == k {
                break;
            }
            j = pick_row.0;
            k = pick_col.0;
        }
        pi.prob(j, k)
    };

    let mut starts: Vec<(usize, usize)> = Vec::new();
    if dims.cells() <= 4096 {
        for j in 0..dims.m1() {
            for k in 0..dims.m2() {
                starts.push((j, k));
            }
        }
    }
    let mut rng = rng::stream_rng(seed, streams::SEARCH);
    for _ in 0..restarts {
        let j = rand::Rng::random_range(&mut rng, 0..dims.m1());
        let k = rand::Rng::random_range(&mut rng, 0..dims.m2());
        starts.push((j, k));
    }

    let mut best_min = f64::INFINITY;
    let mut best_max = 0.0_f64;
    for &s in &starts {
        best_min = best_min.min(walk(s, true));
        best_max = best_max.max(walk(s, false));
    }
    Ok((best_min.sqrt(), best_max.sqrt()))
}

// ---------------------------------------------------------------------------
// Coherence search
// ---------------------------------------------------------------------------

/// Best found value of `|<A,B>_{L2(Pi)}| / (||A||_* ||B||_*)` over
/// trace-orthogonal pairs, with the witness pair. A lower bound on `rho`.
///
/// Seeds every two-cell witness (`E1 ± E2` patterns, whose ratio is
/// `|pi_1 - pi_2| / 4`, or `/ 2` when the cells share a row or column) and
/// polishes the best candidates by projected gradient ascent, where `B`
/// is re-orthogonalized against `A` after every step.
pub fn rho_search(
    pi: &SamplingDistribution,
    restarts: usize,
    seed: u64,
) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    let dims = pi.dims();
    let (m1, m2) = (dims.m1(), dims.m2());
    let ratio = |a: &DMatrix<f64>, b: &DMatrix<f64>| -> f64 {
        let num = pi.l2pi_inner(a, b).expect("shapes fixed").abs();
        let den = nuclear_norm(a) * nuclear_norm(b);
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    };

    let mut best_val = 0.0_f64;
    let mut best_a = DMatrix::zeros(m1, m2);
    let mut best_b = DMatrix::zeros(m1, m2);
    best_a[(0, 0)] = 1.0;
    if m2 > 1 {
        best_b[(0, 1)] = 1.0;
    } else if m1 > 1 {
        best_b[(1, 0)] = 1.0;
    }
    let consider = |val: f64, a: &DMatrix<f64>, b: &DMatrix<f64>, best_val: &mut f64,
                        best_a: &mut DMatrix<f64>, best_b: &mut DMatrix<f64>| {
        if val > *best_val {
            *best_val = val;
            *best_a = a.clone();
            *best_b = b.clone();
        }
    };

    // Two-cell seeds.
    let cells: Vec<(usize, usize)> = (0..m1)
        .flat_map(|j| (0..m2).map(move |k| (j, k)))
        .collect();
    for (i, &(j1, k1)) in cells.iter().enumerate() {
        for &(j2, k2) in cells.iter().skip(i + 1) {
            let mut a = DMatrix::zeros(m1, m2);
            let mut b = DMatrix::zeros(m1, m2);
            a[(j1, k1)] = 1.0;
            a[(j2, k2)] = 1.0;
            b[(j1, k1)] = 1.0;
            b[(j2, k2)] = -1.0;
            let val = ratio(&a, &b);
            consider(val, &a, &b, &mut best_val, &mut best_a, &mut best_b);
        }
    }

    // Projected ascent polish from random starts and from the best seed.
    let mut rng = rng::stream_rng(seed, streams::SEARCH);
    let orthogonalize = |b: &mut DMatrix<f64>, a: &DMatrix<f64>| {
        let denom = a.norm_squared();
        if denom > 0.0 {
            let coef = trace_inner(a, b) / denom;
            *b -= a * coef;
        }
    };
    let mut starts: Vec<(DMatrix<f64>, DMatrix<f64>)> = vec![(best_a.clone(), best_b.clone())];
    for _ in 0..restarts {
        let a = random_matrix(dims, &mut rng);
        let mut b = random_matrix(dims, &mut rng);
        orthogonalize(&mut b, &a);
        starts.push((a, b));
    }
    for (mut a, mut b) in starts {
        if a.norm() == 0.0 || b.norm() == 0.0 {
            continue;
        }
        a /= a.norm();
        b /= b.norm();
        let mut step = 0.1;
        let mut val = ratio(&a, &b);
        for _ in 0..300 {
            let num = pi.l2pi_inner(&a, &b).expect("shapes fixed");
            if num.abs() < 1e-15 {
                break;
            }
            let grad = |x: &DMatrix<f64>, other: &DMatrix<f64>| -> DMatrix<f64> {
                // Gradient of log |<A,B>_pi| - log ||X||_* in X.
                let weighted = DMatrix::from_fn(m1, m2, |j, k| pi.prob(j, k) * other[(j, k)]);
                let (u, _, v) = linalg::svd_triple(x);
                let sub = &u * v.transpose();
                weighted / num - sub / nuclear_norm(x)
            };
            let mut a_new = &a + grad(&a, &b) * step;
            let mut b_new = &b + grad(&b, &a) * step;
            orthogonalize(&mut b_new, &a_new);
            if a_new.norm() == 0.0 || b_new.norm() == 0.0 {
                break;
            }
            a_new /= a_new.norm();
            b_new /= b_new.norm();
            let val_new = ratio(&a_new, &b_new);
            if val_new > val {
                val = val_new;
                a = a_new;
                b = b_new;
                step *= 1.2;
            } else {
                step *= 0.5;
                if step < 1e-8 {
                    break;
                }
            }
        }
        // Exact feasibility of the reported witness.
        orthogonalize(&mut b, &a);
        let val = ratio(&a, &b);
        consider(val, &a, &b, &mut best_val, &mut best_a, &mut best_b);
    }

    (best_val, best_a, best_b)
}

// ---------------------------------------------------------------------------
// Assumption certificates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateStatus {
    /// Inequality verified against an exactly known `rho`.
    Holds,
    /// The searched lower bound does not violate the inequality, but `rho`
    /// itself is not known exactly.
    NotRefuted,
    /// The witness value alone already violates the inequality.
    Refuted,
}

/// Outcome of checking `rho <= kappa_1^2 / ((1 + 2 c0) alpha r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCertificate {
    pub status: CertificateStatus,
    pub rho_value: f64,
    pub rho_exact: bool,
    pub threshold: f64,
    pub c0: f64,
    pub alpha: f64,
    pub r: usize,
}

/// Checks the incoherence condition for the given constants. `rho_value` is
/// treated as exact when `rho_exact` (uniform sampling), otherwise as a
/// lower bound, in which case a non-violation is only "not refuted".
pub fn check_assumption_incoherence(
    kappa1: f64,
    rho_value: f64,
    rho_exact: bool,
    c0: f64,
    alpha: f64,
    r: usize,
) -> Result<AssumptionCertificate> {
    if !(alpha > 1.0) {
        return Err(Error::param(format!("alpha must be > 1, got {alpha}")));
    }
    if c0 < 0.0 {
        return Err(Error::param("c0 must be nonnegative"));
    }
    if r == 0 {
        return Err(Error::param("r must be at least 1"));
    }
    let threshold = kappa1 * kappa1 / ((1.0 + 2.0 * c0) * alpha * r as f64);
    let status = if rho_value > threshold {
        CertificateStatus::Refuted
    } else if rho_exact {
        CertificateStatus::Holds
    } else {
        CertificateStatus::NotRefuted
    };
    Ok(AssumptionCertificate {
        status,
        rho_value,
        rho_exact,
        threshold,
        c0,
        alpha,
        r,
    })
}

// ---------------------------------------------------------------------------
// Projector algebra and the cone
// ---------------------------------------------------------------------------

/// Splits `B` into its part touching the support of `A0` and the
/// complementary part: `(P(B), Pperp(B))` with
/// `Pperp(B) = P_{S1perp} B P_{S2perp}` and `P(B) = B - Pperp(B)`.
pub fn projector_decompose(
    truth: &GroundTruth,
    b: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let dims = truth.dims();
    if !dims.matches(b.nrows(), b.ncols()) {
        return Err(Error::dims(
            dims.to_string(),
            format!("{}x{}", b.nrows(), b.ncols()),
        ));
    }
    let u = truth.left_factors();
    let v = truth.right_factors();
    let p1_perp = DMatrix::identity(dims.m1(), dims.m1()) - u * u.transpose();
    let p2_perp = DMatrix::identity(dims.m2(), dims.m2()) - v * v.transpose();
    let perp = &p1_perp * b * &p2_perp;
    let on = b - &perp;
    Ok((on, perp))
}

/// True iff `||Pperp(B)||_* <= c0 ||P(B)||_*` within tolerance 1e-10.
pub fn cone_membership(truth: &GroundTruth, b: &DMatrix<f64>, c0: f64) -> Result<bool> {
    let (on, perp) = projector_decompose(truth, b)?;
    Ok(nuclear_norm(&perp) <= c0 * nuclear_norm(&on) + 1e-10)
}

/// Sampled lower bound on `mu_{c0}(A0)`: the largest observed ratio
/// `||P(B)||_2 / ||B||_{L2(Pi)}` over cone members built as
/// `P(B0) + s * Pperp(W)` with `s` scaled to keep the cone inequality.
pub fn mu_c0_search(
    pi: &SamplingDistribution,
    truth: &GroundTruth,
    c0: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if c0 < 0.0 {
        return Err(Error::param("c0 must be nonnegative"));
    }
    if pi.dims() != truth.dims() {
        return Err(Error::dims(pi.dims().to_string(), truth.dims().to_string()));
    }
    let mut rng = rng::stream_rng(seed, streams::SEARCH);
    let mut best = 0.0_f64;
    let mut evaluate = |b: &DMatrix<f64>| -> Result<()> {
        let (on, _) = projector_decompose(truth, b)?;
        let denom = pi.l2pi_norm(b)?;
        if denom > 0.0 {
            best = best.max(on.norm() / denom);
        }
        Ok(())
    };
    // Deterministic witness: A0 itself lies in the cone for every c0.
    evaluate(truth.matrix())?;
    for _ in 0..samples {
        let b0 = random_matrix(pi.dims(), &mut rng);
        let w = random_matrix(pi.dims(), &mut rng);
        let (on, _) = projector_decompose(truth, &b0)?;
        let (_, perp_w) = projector_decompose(truth, &w)?;
        let nn_perp = nuclear_norm(&perp_w);
        if nn_perp == 0.0 {
            evaluate(&on)?;
            continue;
        }
        // Scale the complement so the cone inequality holds with the chosen
        // slack; s = s_max puts the member on the cone boundary.
        let s_max = c0 * nuclear_norm(&on) / nn_perp;
        let u: f64 = rand::Rng::random(&mut rng);
        for s in [s_max, s_max * u, 0.0] {
            let b = &on + &perp_w * s;
            evaluate(&b)?;
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Stochastic error matrices
// ---------------------------------------------------------------------------

/// The noise-driven and sampling-driven error matrices
/// `M1 = (1/n) sum_i xi_i X_i` and
/// `M2 = (1/n) sum_i (<A0, X_i> X_i - E <A0, X> X)`,
/// recovered from a synthetic dataset via `xi_i = Y_i - A0[j_i, k_i]`.
pub fn stochastic_errors(
    pi: &SamplingDistribution,
    data: &Dataset,
    truth: &GroundTruth,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if data.provenance().is_none() {
        return Err(Error::MissingProvenance);
    }
    let dims = data.dims();
    if dims != truth.dims() || dims != pi.dims() {
        return Err(Error::dims(dims.to_string(), "mismatched model components"));
    }
    let n = data.n() as f64;
    let mut m1 = DMatrix::zeros(dims.m1(), dims.m2());
    let mut m2 = DMatrix::zeros(dims.m1(), dims.m2());
    for obs in data.entries() {
        let a0 = truth.entry(obs.row, obs.col);
        m1[(obs.row, obs.col)] += (obs.value - a0) / n;
        m2[(obs.row, obs.col)] += a0 / n;
    }
    // Subtract the expectation matrix E <A0, X> X, entrywise pi * a0.
    for j in 0..dims.m1() {
        for k in 0..dims.m2() {
            m2[(j, k)] -= pi.prob(j, k) * truth.entry(j, k);
        }
    }
    Ok((m1, m2))
}

// ---------------------------------------------------------------------------
// Bernstein-type bounds
// ---------------------------------------------------------------------------

/// Bounded-increment matrix Bernstein deviation value:
/// `2 max{ sigma_Z sqrt((t + log m)/n), U (t + log m)/n }`.
pub fn bernstein_bound_bounded(sigma_z: f64, u: f64, n: usize, m: usize, t: f64) -> f64 {
    let lead = (t + (m as f64).ln()) / n as f64;
    2.0 * (sigma_z * lead.sqrt()).max(u * lead)
}

/// psi_beta-increment deviation value:
/// `C max{ sigma_Z sqrt((t+log m)/n), U_beta log^{1/beta}(U_beta/sigma_Z) (t+log m)/n }`.
///
/// Rejects `u_beta < sigma_z`, where the logarithm would go negative.
pub fn bernstein_bound_psi(
    sigma_z: f64,
    u_beta: f64,
    beta: f64,
    n: usize,
    m: usize,
    t: f64,
    c: f64,
) -> Result<f64> {
    if !(beta >= 1.0) {
        return Err(Error::param(format!("beta must be >= 1, got {beta}")));
    }
    if !(sigma_z > 0.0) {
        return Err(Error::param("sigma_z must be positive"));
    }
    if u_beta < sigma_z {
        return Err(Error::param(format!(
            "u_beta ({u_beta}) must be >= sigma_z ({sigma_z}) for the log factor"
        )));
    }
    let lead = (t + (m as f64).ln()) / n as f64;
    let log_factor = (u_beta / sigma_z).ln().powf(1.0 / beta);
    Ok(c * (sigma_z * lead.sqrt()).max(u_beta * log_factor * lead))
}

/// Deviation bound for `||M1||` in the completion model:
/// `C sigma max{ sqrt((t+log m)/((m1^m2) n)),
///               (t+log m) log^{1/beta}(m1^m2) / n }`.
/// For bounded noise the log factor collapses to 1.
pub fn m1_norm_bound(
    c: f64,
    sigma: f64,
    dims: crate::model::Dimensions,
    n: usize,
    t: f64,
    psi: PsiExponent,
) -> f64 {
    let lead = t + (dims.m_sum() as f64).ln();
    let first = (lead / (dims.min_dim() as f64 * n as f64)).sqrt();
    let second = lead * psi.log_factor(dims.min_dim() as f64) / n as f64;
    c * sigma * first.max(second)
}

/// Deviation bound for `||M2||`:
/// `2 c1' a max{ sqrt((t+log m)/((m1^m2) n)), 2 (t+log m)/n }`.
pub fn m2_norm_bound(c1_prime: f64, a: f64, dims: crate::model::Dimensions, n: usize, t: f64) -> f64 {
    let lead = t + (dims.m_sum() as f64).ln();
    let first = (lead / (dims.min_dim() as f64 * n as f64)).sqrt();
    let second = 2.0 * lead / n as f64;
    2.0 * c1_prime * a * first.max(second)
}

/// Exact `sigma_Z` for the `M1` summands `Z = xi X`:
/// `sigma_xi * sqrt(max(max row mass, max col mass))`.
pub fn m1_sigma_z(pi: &SamplingDistribution, noise: &NoiseModel) -> f64 {
    let pmf = pi.pmf();
    let row_max = (0..pmf.nrows())
        .map(|j| pmf.row(j).sum())
        .fold(0.0_f64, f64::max);
    let col_max = (0..pmf.ncols())
        .map(|k| pmf.column(k).sum())
        .fold(0.0_f64, f64::max);
    noise.sigma * row_max.max(col_max).sqrt()
}

/// Exact `sigma_Z` for the `M2` summands `Z = <A0,X> X - E <A0,X> X`,
/// computed from the second-moment matrices of the weighted design.
pub fn m2_sigma_z(pi: &SamplingDistribution, truth: &GroundTruth) -> f64 {
    let dims = pi.dims();
    let a0 = truth.matrix();
    let phi = DMatrix::from_fn(dims.m1(), dims.m2(), |j, k| pi.prob(j, k) * a0[(j, k)]);
    let mut d_rows = DMatrix::zeros(dims.m1(), dims.m1());
    for j in 0..dims.m1() {
        let s: f64 = (0..dims.m2())
            .map(|k| pi.prob(j, k) * a0[(j, k)] * a0[(j, k)])
            .sum();
        d_rows[(j, j)] = s;
    }
    let mut d_cols = DMatrix::zeros(dims.m2(), dims.m2());
    for k in 0..dims.m2() {
        let s: f64 = (0..dims.m1())
            .map(|j| pi.prob(j, k) * a0[(j, k)] * a0[(j, k)])
            .sum();
        d_cols[(k, k)] = s;
    }
    let row_side = spectral_norm(&(d_rows - &phi * phi.transpose()));
    let col_side = spectral_norm(&(d_cols - phi.transpose() * &phi));
    row_side.max(col_side).max(0.0).sqrt()
}

/// Deterministic spectral-error bound valid on the oracle event
/// `lambda >= 3 ||M1 + M2||` under the incoherence condition with `c0 = 5`:
/// `(5/6 + 6 sqrt(2) / (11 (alpha - 1))) * lambda / kappa_1^2`.
pub fn oracle_spectral_bound(lambda: f64, kappa1: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(Error::param(format!("alpha must be > 1, got {alpha}")));
    }
    if !(kappa1 > 0.0) {
        return Err(Error::param("kappa1 must be positive"));
    }
    let constant = 5.0 / 6.0 + 6.0 * 2.0_f64.sqrt() / (11.0 * (alpha - 1.0));
    Ok(constant * lambda / (kappa1 * kappa1))
}

/// Intermediate `L2(Pi)` error bound `lambda * mu5 * sqrt(rank)`.
pub fn l2pi_error_bound(lambda: f64, mu5: f64, rank: usize) -> f64 {
    lambda * mu5 * (rank as f64).sqrt()
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

/// Orthonormal bases of the support `(S1(A), S2(A))` of a matrix.
#[derive(Debug, Clone)]
pub struct ProjectorPair {
    pub s1_basis: DMatrix<f64>,
    pub s2_basis: DMatrix<f64>,
}

impl ProjectorPair {
    pub fn from_truth(truth: &GroundTruth) -> Self {
        ProjectorPair {
            s1_basis: truth.left_factors().clone(),
            s2_basis: truth.right_factors().clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsOptions {
    pub c0: f64,
    pub alpha: f64,
    pub rank: Option<usize>,
    pub restarts: usize,
    pub samples: usize,
    pub t: f64,
    pub bernstein_c: f64,
    pub seed: u64,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        DiagnosticsOptions {
            c0: 5.0,
            alpha: 2.0,
            rank: None,
            restarts: 32,
            samples: 200,
            t: 3.0,
            bernstein_c: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BernsteinRecord {
    pub t: f64,
    pub m1_bound: Option<f64>,
    pub m2_bound: Option<f64>,
    pub m1_sigma_z: Option<f64>,
    pub m2_sigma_z: Option<f64>,
    pub constant_c: f64,
}

/// Everything the diagnostics pass reports, JSON-serializable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub kappa1: f64,
    pub kappa1_prime: f64,
    pub kappa_r_estimate: Option<(f64, f64)>,
    pub rho_lower: f64,
    pub rho_exact: bool,
    pub rho_witness_a: Vec<Vec<f64>>,
    pub rho_witness_b: Vec<Vec<f64>>,
    pub mu_c0_lower: Option<f64>,
    pub assumption1_certificate: AssumptionCertificate,
    /// `(c1, c1')` with `c1/(m1 m2) <= pi <= c1'/(m1 m2)`.
    pub assumption3_constants: (f64, f64),
    pub m1_norm: Option<f64>,
    pub m2_norm: Option<f64>,
    pub bernstein_bounds: BernsteinRecord,
    pub search_restarts: usize,
    pub search_samples: usize,
    pub seed: u64,
    pub rng_algorithm: String,
}

pub(crate) fn matrix_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

/// Runs the full diagnostics pass. The truth enables the projector-based
/// quantities; the dataset (with provenance) enables the observed stochastic
/// error norms.
pub fn diagnostics_report(
    pi: &SamplingDistribution,
    truth: Option<&GroundTruth>,
    data: Option<&Dataset>,
    opts: &DiagnosticsOptions,
) -> Result<DiagnosticsReport> {
    let (k1, k1p) = kappa1(pi);
    let rank = opts
        .rank
        .or_else(|| truth.map(|t| t.rank()))
        .unwrap_or(1);
    let kappa_r_estimate = Some(kappa_r_heuristic(pi, rank.min(pi.dims().min_dim()), opts.restarts, opts.seed)?);
    let (rho_lower, wa, wb) = rho_search(pi, opts.restarts, opts.seed);
    let rho_exact = pi.is_uniform();
    // Under uniform sampling rho is exactly zero; report the exact value.
    let rho_value = if rho_exact { 0.0 } else { rho_lower };
    let certificate =
        check_assumption_incoherence(k1, rho_value, rho_exact, opts.c0, opts.alpha, rank)?;
    let mu_c0_lower = match truth {
        Some(t) => Some(mu_c0_search(pi, t, opts.c0, opts.samples, opts.seed)?),
        None => None,
    };
    let (m1_norm, m2_norm) = match (truth, data) {
        (Some(t), Some(d)) => {
            let (m1, m2) = stochastic_errors(pi, d, t)?;
            (Some(spectral_norm(&m1)), Some(spectral_norm(&m2)))
        }
        _ => (None, None),
    };
    let (_, c1p) = pi.mass_bound_constants();
    let bernstein = match (truth, data) {
        (Some(t), Some(d)) => {
            let noise = d
                .provenance()
                .map(|p| p.noise)
                .unwrap_or(NoiseModel {
                    kind: crate::model::NoiseKind::Gaussian,
                    sigma: 0.0,
                });
            BernsteinRecord {
                t: opts.t,
                m1_bound: Some(m1_norm_bound(
                    opts.bernstein_c,
                    noise.sigma,
                    pi.dims(),
                    d.n(),
                    opts.t,
                    noise.psi_exponent(),
                )),
                m2_bound: Some(m2_norm_bound(c1p, t.entry_bound(), pi.dims(), d.n(), opts.t)),
                m1_sigma_z: Some(m1_sigma_z(pi, &noise)),
                m2_sigma_z: Some(m2_sigma_z(pi, t)),
                constant_c: opts.bernstein_c,
            }
        }
        _ => BernsteinRecord {
            t: opts.t,
            m1_bound: None,
            m2_bound: None,
            m1_sigma_z: None,
            m2_sigma_z: None,
            constant_c: opts.bernstein_c,
        },
    };
    Ok(DiagnosticsReport {
        kappa1: k1,
        kappa1_prime: k1p,
        kappa_r_estimate,
        rho_lower: rho_value,
        rho_exact,
        rho_witness_a: matrix_rows(&wa),
        rho_witness_b: matrix_rows(&wb),
        mu_c0_lower,
        assumption1_certificate: certificate,
        assumption3_constants: pi.mass_bound_constants(),
        m1_norm,
        m2_norm,
        bernstein_bounds: bernstein,
        search_restarts: opts.restarts,
        search_samples: opts.samples,
        seed: opts.seed,
        rng_algorithm: rng::RNG_ALGORITHM.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_dataset, Dimensions, NoiseKind, TruthKind};
    use crate::rng::rng_from_seed;

    fn dims(m1: usize, m2: usize) -> Dimensions {
        Dimensions::new(m1, m2).unwrap()
    }

    #[test]
    fn kappa1_closed_form() {
        let pi = SamplingDistribution::uniform(dims(3, 4));
        let (k1, k1p) = kappa1(&pi);
        assert!((k1 - (1.0 / 12.0_f64).sqrt()).abs() < 1e-15);
        assert_eq!(k1, k1p);

        let pmf = DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.1, 0.4]);
        let pi = SamplingDistribution::from_pmf(dims(2, 2), pmf).unwrap();
        let (k1, k1p) = kappa1(&pi);
        assert!((k1 - 0.1_f64.sqrt()).abs() < 1e-15);
        assert!((k1p - 0.4_f64.sqrt()).abs() < 1e-15);

        // The two-sided mass bound holds with c1 = m1 m2 k1^2, c1' = m1 m2 k1p^2.
        let (c1, c1p) = pi.mass_bound_constants();
        let cells = 4.0;
        assert!((c1 - cells * k1 * k1).abs() < 1e-12);
        assert!((c1p - cells * k1p * k1p).abs() < 1e-12);
        for &p in pi.pmf().iter() {
            assert!(c1 / cells <= p + 1e-15 && p <= c1p / cells + 1e-15);
        }
    }

    #[test]
    fn kappa_heuristic_matches_closed_form() {
        let mut rng = rng_from_seed(13);
        for trial in 0..10 {
            let d = dims(2 + trial % 4, 3 + trial % 3);
            let raw = DMatrix::from_fn(d.m1(), d.m2(), |_, _| {
                rand::Rng::random_range(&mut rng, 0.1..1.0)
            });
            let total: f64 = raw.iter().sum();
            let pi = SamplingDistribution::from_pmf(d, raw / total).unwrap();
            let (k1, k1p) = kappa1(&pi);
            let (est_min, est_max) = kappa_r_heuristic(&pi, 1, 16, trial as u64).unwrap();
            assert!((est_min - k1).abs() < 1e-12);
            assert!((est_max - k1p).abs() < 1e-12);
        }
    }

    #[test]
    fn kappa_heuristic_monotone_in_rank() {
        let pi = SamplingDistribution::power_law(dims(4, 4), 1.0, 1.0, 0.05).unwrap();
        let (k1, _) = kappa1(&pi);
        let mut last = f64::INFINITY;
        for r in 1..=4 {
            let (est, est_max) = kappa_r_heuristic(&pi, r, 8, 3).unwrap();
            assert!(est <= k1 + 1e-9);
            assert!(est <= last + 1e-12);
            assert!(est_max >= kappa1(&pi).1 - 1e-9);
            last = est;
        }
        assert!(kappa_r_heuristic(&pi, 0, 8, 3).is_err());
        assert!(kappa_r_heuristic(&pi, 5, 8, 3).is_err());
    }

    #[test]
    fn rho_uniform_is_zero() {
        let pi = SamplingDistribution::uniform(dims(3, 3));
        for seed in 0..5 {
            let (val, a, b) = rho_search(&pi, 8, seed);
            assert!(val <= 1e-10, "rho {val}");
            assert!(trace_inner(&a, &b).abs() <= 1e-10 * a.norm() * b.norm());
        }
    }

    #[test]
    fn rho_witness_instance() {
        let pmf = DMatrix::from_row_slice(2, 2, &[0.7, 0.1, 0.1, 0.1]);
        let pi = SamplingDistribution::from_pmf(dims(2, 2), pmf).unwrap();
        let (val, a, b) = rho_search(&pi, 16, 7);
        // The diagonal two-cell witness alone gives |0.7 - 0.1| / 4 = 0.15.
        assert!(val >= 0.15, "rho {val}");
        assert!(trace_inner(&a, &b).abs() <= 1e-10);
    }

    #[test]
    fn rho_search_dominates_dense_sampling_oracle_2x2() {
        // Exhaustive-style cross check on a 2x2 grid: many random
        // trace-orthogonal pairs must not beat the reported lower bound.
        let pmf = DMatrix::from_row_slice(2, 2, &[0.55, 0.2, 0.15, 0.1]);
        let pi = SamplingDistribution::from_pmf(dims(2, 2), pmf).unwrap();
        let (found, _, _) = rho_search(&pi, 32, 5);
        let mut rng = rng_from_seed(41);
        let mut sampled_best = 0.0_f64;
        for _ in 0..20_000 {
            let a = random_matrix(dims(2, 2), &mut rng);
            let mut b = random_matrix(dims(2, 2), &mut rng);
            let coef = trace_inner(&a, &b) / a.norm_squared();
            b -= &a * coef;
            let num = pi.l2pi_inner(&a, &b).unwrap().abs();
            let den = nuclear_norm(&a) * nuclear_norm(&b);
            if den > 1e-12 {
                sampled_best = sampled_best.max(num / den);
            }
        }
        assert!(
            found >= sampled_best - 1e-3,
            "search {found} vs sampled {sampled_best}"
        );
    }

    #[test]
    fn incoherence_certificate_cases() {
        // Uniform: rho = 0 exactly, holds for any admissible constants.
        let cert = check_assumption_incoherence(0.2, 0.0, true, 5.0, 2.0, 1).unwrap();
        assert_eq!(cert.status, CertificateStatus::Holds);

        // rho = kappa1^2 with c0 = 5, alpha = 2, r = 1: threshold is /22.
        let k1sq = 0.04;
        let cert = check_assumption_incoherence(0.2, k1sq, true, 5.0, 2.0, 1).unwrap();
        assert_eq!(cert.status, CertificateStatus::Refuted);

        // Boundary value passes (non-strict inequality).
        let boundary = k1sq / 22.0;
        let cert = check_assumption_incoherence(0.2, boundary, true, 5.0, 2.0, 1).unwrap();
        assert_eq!(cert.status, CertificateStatus::Holds);
        let cert = check_assumption_incoherence(0.2, boundary, false, 5.0, 2.0, 1).unwrap();
        assert_eq!(cert.status, CertificateStatus::NotRefuted);

        assert!(check_assumption_incoherence(0.2, 0.0, true, 5.0, 1.0, 1).is_err());
    }

    #[test]
    fn projector_identities() {
        let d = dims(6, 5);
        let truth = GroundTruth::generate(TruthKind::RandomOrthonormal, d, 2, 1.0, 17).unwrap();
        let (on, perp) = projector_decompose(&truth, truth.matrix()).unwrap();
        assert!((on - truth.matrix()).norm() < 1e-10);
        assert!(perp.norm() < 1e-10);

        let mut rng = rng_from_seed(19);
        for _ in 0..20 {
            let b = random_matrix(d, &mut rng);
            let (on, perp) = projector_decompose(&truth, &b).unwrap();
            assert!((&on + &perp - &b).norm() < 1e-12);
            assert!(trace_inner(&on, &perp).abs() < 1e-10);
            // Pperp is idempotent.
            let (_, perp2) = projector_decompose(&truth, &perp).unwrap();
            assert!((&perp2 - &perp).norm() < 1e-12);
            // Projected nuclear mass obeys the rank-doubling bound.
            assert!(
                nuclear_norm(&on)
                    <= (2.0 * truth.rank() as f64).sqrt() * on.norm() + 1e-9
            );
        }
    }

    #[test]
    fn projector_complement_case() {
        let d = dims(4, 4);
        // Truth supported on the first basis direction only.
        let left = DMatrix::from_column_slice(4, 1, &[1.0, 0.0, 0.0, 0.0]);
        let right = DMatrix::from_column_slice(4, 1, &[1.0, 0.0, 0.0, 0.0]);
        let truth = GroundTruth::new(d, left, vec![1.0], right, 1.0).unwrap();
        // B living entirely in the complement rows/cols.
        let mut b = DMatrix::zeros(4, 4);
        b[(2, 3)] = 2.0;
        b[(3, 2)] = -1.0;
        let (on, perp) = projector_decompose(&truth, &b).unwrap();
        assert!(on.norm() < 1e-12);
        assert!((perp - &b).norm() < 1e-12);
        assert!(!cone_membership(&truth, &b, 10.0).unwrap());
        assert!(cone_membership(&truth, truth.matrix(), 0.0).unwrap());
    }

    #[test]
    fn mu_search_uniform_cap() {
        let d = dims(5, 5);
        let pi = SamplingDistribution::uniform(d);
        let truth = GroundTruth::generate(TruthKind::RandomOrthonormal, d, 2, 1.0, 23).unwrap();
        let mu = mu_c0_search(&pi, &truth, 5.0, 200, 1).unwrap();
        // Exact isotropy bound 1/kappa1 = 5.
        assert!(mu <= 5.0 + 1e-9, "mu {mu}");
        assert!(mu > 0.0);
        // Restricted-constant cap for alpha = 2: 5 * sqrt(2).
        assert!(mu <= 5.0 * 2.0_f64.sqrt());
    }

    #[test]
    fn stochastic_errors_trivial_cases() {
        let d = dims(5, 4);
        let pi = SamplingDistribution::uniform(d);
        let truth = GroundTruth::generate(TruthKind::RandomOrthonormal, d, 2, 1.0, 29).unwrap();

        // sigma = 0: M1 = 0 exactly.
        let data = generate_dataset(&pi, &truth, &NoiseModel::gaussian(0.0).unwrap(), 100, 3)
            .unwrap();
        let (m1, _) = stochastic_errors(&pi, &data, &truth).unwrap();
        assert!(m1.iter().all(|&v| v == 0.0));

        // Zero truth: M2 = 0 exactly.
        let zero = GroundTruth::zero(d);
        let data = generate_dataset(&pi, &zero, &NoiseModel::gaussian(1.0).unwrap(), 100, 5)
            .unwrap();
        let (_, m2) = stochastic_errors(&pi, &data, &zero).unwrap();
        assert!(m2.iter().all(|&v| v == 0.0));

        // Provenance is required.
        let bare = Dataset::new(d, data.entries().to_vec(), None).unwrap();
        assert!(matches!(
            stochastic_errors(&pi, &bare, &truth),
            Err(Error::MissingProvenance)
        ));
    }

    #[test]
    fn bernstein_bounded_reference_value() {
        // sigma_Z=0.1, U=1, n=100, m=20, t=3 -> 0.11991.
        let v = bernstein_bound_bounded(0.1, 1.0, 100, 20, 3.0);
        assert!((v - 0.11991).abs() < 1e-5, "{v}");

        // Branch crossover at sigma_Z^2 n = U^2 (t + log m).
        let t = 2.0;
        let m = 10;
        let n = 50;
        let u = 0.7;
        let sigma_z = u * ((t + (m as f64).ln()) / n as f64).sqrt();
        let lead = (t + (m as f64).ln()) / n as f64;
        assert!((sigma_z * lead.sqrt() - u * lead).abs() < 1e-15);

        // Doubling U doubles the bound when the second branch is active.
        let v1 = bernstein_bound_bounded(0.01, 1.0, 10, 20, 3.0);
        let v2 = bernstein_bound_bounded(0.01, 2.0, 10, 20, 3.0);
        assert!((v2 / v1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bernstein_psi_cases() {
        // U = sigma collapses the second branch.
        let v = bernstein_bound_psi(0.5, 0.5, 2.0, 100, 20, 3.0, 1.0).unwrap();
        let lead = (3.0 + 20.0_f64.ln()) / 100.0;
        assert!((v - 0.5 * lead.sqrt()).abs() < 1e-15);

        // The log factor decreases in beta.
        let v1 = bernstein_bound_psi(0.001, 1.0, 1.0, 10, 20, 3.0, 1.0).unwrap();
        let v2 = bernstein_bound_psi(0.001, 1.0, 2.0, 10, 20, 3.0, 1.0).unwrap();
        let v4 = bernstein_bound_psi(0.001, 1.0, 8.0, 10, 20, 3.0, 1.0).unwrap();
        assert!(v1 > v2 && v2 > v4);

        assert!(bernstein_bound_psi(1.0, 0.5, 2.0, 10, 20, 3.0, 1.0).is_err());
    }

    #[test]
    fn oracle_spectral_bound_value() {
        // alpha=2, lambda=0.3, kappa1^2=0.01 -> (5/6 + 6 sqrt2 / 11) * 30 = 48.142.
        let v = oracle_spectral_bound(0.3, 0.1, 2.0).unwrap();
        assert!((v - 48.142).abs() < 5e-3, "{v}");
        // Decreasing in alpha, limit 5/6 * lambda / kappa1^2.
        let v4 = oracle_spectral_bound(0.3, 0.1, 4.0).unwrap();
        let vbig = oracle_spectral_bound(0.3, 0.1, 1e9).unwrap();
        assert!(v > v4 && v4 > vbig);
        assert!((vbig - 5.0 / 6.0 * 30.0).abs() < 1e-3);
        assert!(oracle_spectral_bound(0.3, 0.1, 1.0).is_err());
    }

    #[test]
    fn l2pi_error_bound_values() {
        assert_eq!(l2pi_error_bound(0.1, 5.0, 0), 0.0);
        assert!((l2pi_error_bound(0.1, 5.0, 4) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distortion_sandwich_many_matrices() {
        let d = dims(5, 6);
        let pi = SamplingDistribution::power_law(d, 1.2, 0.4, 0.03).unwrap();
        let (k1, k1p) = kappa1(&pi);
        let mut rng = rng_from_seed(37);
        for _ in 0..1000 {
            let a = random_matrix(d, &mut rng);
            let norm = pi.l2pi_norm(&a).unwrap();
            assert!(k1 * a.norm() <= norm + 1e-12);
            assert!(norm <= k1p * a.norm() + 1e-12);
        }
    }

    #[test]
    fn report_serializes() {
        let d = dims(4, 4);
        let pi = SamplingDistribution::uniform(d);
        let truth = GroundTruth::generate(TruthKind::RandomOrthonormal, d, 2, 1.0, 41).unwrap();
        let noise = NoiseModel::new(NoiseKind::Laplace, 0.5).unwrap();
        let data = generate_dataset(&pi, &truth, &noise, 60, 43).unwrap();
        let report = diagnostics_report(
            &pi,
            Some(&truth),
            Some(&data),
            &DiagnosticsOptions::default(),
        )
        .unwrap();
        assert_eq!(
            report.assumption1_certificate.status,
            CertificateStatus::Holds
        );
        assert!(report.m1_norm.is_some());
        let json = serde_json::to_string(&report).unwrap();
        let back: DiagnosticsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.kappa1, report.kappa1);
    }
}
