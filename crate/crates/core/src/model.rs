//! Trace-regression model on the matrix-completion basis.
//!
//! Observations are `Y_i = A0[j_i, k_i] + xi_i` where the index pair is drawn
//! i.i.d. from a sampling distribution over the entries of an `m1 x m2`
//! matrix and `xi` is centered noise. This module holds the sampling
//! distributions, factored low-rank ground truths, noise models, and the
//! synthetic data generator, together with the sampling-weighted inner
//! product that the estimator minimizes against.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, streams};

/// Tolerance for "pmf sums to one".
pub const PMF_SUM_TOL: f64 = 1e-12;
/// Tolerance for orthonormality of stored factors.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Dimensions
// ---------------------------------------------------------------------------

/// Matrix shape `m1 x m2` with the derived quantities used throughout:
/// `m = m1 + m2` and `M = max(m1, m2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimensions {
    m1: usize,
    m2: usize,
}

impl Dimensions {
    pub fn new(m1: usize, m2: usize) -> Result<Self> {
        if m1 == 0 || m2 == 0 {
            return Err(Error::param("dimensions must be at least 1x1"));
        }
        Ok(Dimensions { m1, m2 })
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn m2(&self) -> usize {
        self.m2
    }

    /// `m1 + m2`, the `m` entering every logarithmic factor.
    pub fn m_sum(&self) -> usize {
        self.m1 + self.m2
    }

    /// `max(m1, m2)`.
    pub fn max_dim(&self) -> usize {
        self.m1.max(self.m2)
    }

    /// `min(m1, m2)`.
    pub fn min_dim(&self) -> usize {
        self.m1.min(self.m2)
    }

    /// `m1 * m2`, the number of cells in the completion basis.
    pub fn cells(&self) -> usize {
        self.m1 * self.m2
    }

    pub fn matches(&self, rows: usize, cols: usize) -> bool {
        self.m1 == rows && self.m2 == cols
    }
}

impl std::fmt::Display for Dimensions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.m1, self.m2)
    }
}

// ---------------------------------------------------------------------------
// Sampling distribution
// ---------------------------------------------------------------------------

/// Probability mass `pi(j, k)` over the cells of the completion basis.
///
/// Every cell must have strictly positive mass (otherwise that entry can
/// never be observed and no estimation guarantee applies), and the masses
/// must sum to one within [`PMF_SUM_TOL`].
#[derive(Debug, Clone)]
pub struct SamplingDistribution {
    dims: Dimensions,
    pmf: DMatrix<f64>,
    /// Row-major cumulative sums, used by inverse-CDF sampling.
    cdf: Vec<f64>,
}

impl SamplingDistribution {
    /// Validates and wraps an explicit pmf.
    pub fn from_pmf(dims: Dimensions, pmf: DMatrix<f64>) -> Result<Self> {
        if !dims.matches(pmf.nrows(), pmf.ncols()) {
            return Err(Error::dims(
                dims.to_string(),
                format!("{}x{}", pmf.nrows(), pmf.ncols()),
            ));
        }
        let mut sum = 0.0;
        for &p in pmf.iter() {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::InvariantViolation(format!(
                    "sampling probabilities must be strictly positive, found {p}"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > PMF_SUM_TOL {
            return Err(Error::InvariantViolation(format!(
                "sampling probabilities sum to {sum}, not 1 within {PMF_SUM_TOL}"
            )));
        }
        let mut cdf = Vec::with_capacity(dims.cells());
        let mut acc = 0.0;
        for j in 0..dims.m1() {
            for k in 0..dims.m2() {
                acc += pmf[(j, k)];
                cdf.push(acc);
            }
        }
        Ok(SamplingDistribution { dims, pmf, cdf })
    }

    /// Uniform mass `1/(m1 m2)` on every cell.
    pub fn uniform(dims: Dimensions) -> Self {
        let p = 1.0 / dims.cells() as f64;
        let pmf = DMatrix::from_element(dims.m1(), dims.m2(), p);
        Self::from_pmf(dims, pmf).expect("uniform pmf is always valid")
    }

    /// Non-uniform mass `pi(j,k) ∝ max(j^{-re} k^{-ce}, floor)`, with 1-based
    /// `j`, `k` and `floor = floor_ratio * max weight`.
    ///
    /// The floor keeps every cell observable: `min pi / max pi >= floor_ratio`.
    pub fn power_law(
        dims: Dimensions,
        row_exponent: f64,
        col_exponent: f64,
        floor_ratio: f64,
    ) -> Result<Self> {
        if !(floor_ratio > 0.0 && floor_ratio <= 1.0) {
            return Err(Error::param(format!(
                "floor_ratio must be in (0, 1], got {floor_ratio}"
            )));
        }
        if row_exponent < 0.0 || col_exponent < 0.0 {
            return Err(Error::param("power-law exponents must be nonnegative"));
        }
        // Raw weights peak at j = k = 1, so the max weight is 1.
        let floor = floor_ratio;
        let mut pmf = DMatrix::from_fn(dims.m1(), dims.m2(), |j, k| {
            let w = ((j + 1) as f64).powf(-row_exponent) * ((k + 1) as f64).powf(-col_exponent);
            w.max(floor)
        });
        let total: f64 = pmf.iter().sum();
        pmf /= total;
        Self::from_pmf(dims, pmf)
    }

    pub fn dims(&self) -> Dimensions {
        self.dims
    }

    pub fn pmf(&self) -> &DMatrix<f64> {
        &self.pmf
    }

    pub fn prob(&self, row: usize, col: usize) -> f64 {
        self.pmf[(row, col)]
    }

    pub fn min_prob(&self) -> f64 {
        self.pmf.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_prob(&self) -> f64 {
        self.pmf.iter().copied().fold(0.0, f64::max)
    }

    /// True when all masses agree to relative precision 1e-12.
    pub fn is_uniform(&self) -> bool {
        let lo = self.min_prob();
        let hi = self.max_prob();
        hi - lo <= 1e-12 * hi
    }

    /// The constants `(c1, c1')` of the two-sided mass bound
    /// `c1/(m1 m2) <= pi(j,k) <= c1'/(m1 m2)`, reported as
    /// `(m1 m2 min pi, m1 m2 max pi)`.
    pub fn mass_bound_constants(&self) -> (f64, f64) {
        let cells = self.dims.cells() as f64;
        (cells * self.min_prob(), cells * self.max_prob())
    }

    /// Inverse-CDF draw of a cell index.
    pub fn sample_index(&self, rng: &mut impl Rng) -> (usize, usize) {
        let u: f64 = rng.random();
        let pos = match self
            .cdf
            .binary_search_by(|probe| probe.partial_cmp(&u).expect("finite cdf"))
        {
            Ok(i) => i + 1,
            Err(i) => i,
        };
        let pos = pos.min(self.cdf.len() - 1);
        (pos / self.dims.m2(), pos % self.dims.m2())
    }

    /// Sampling-weighted inner product
    /// `<A, B>_{L2(Pi)} = sum_{j,k} pi(j,k) A[j,k] B[j,k]`.
    pub fn l2pi_inner(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
        self.check_shape(a)?;
        self.check_shape(b)?;
        Ok(self
            .pmf
            .iter()
            .zip(a.iter().zip(b.iter()))
            .map(|(&p, (&x, &y))| p * x * y)
            .sum())
    }

    /// `||A||_{L2(Pi)}`.
    pub fn l2pi_norm(&self, a: &DMatrix<f64>) -> Result<f64> {
        Ok(self.l2pi_inner(a, a)?.max(0.0).sqrt())
    }

    pub(crate) fn check_shape(&self, a: &DMatrix<f64>) -> Result<()> {
        if !self.dims.matches(a.nrows(), a.ncols()) {
            return Err(Error::dims(
                self.dims.to_string(),
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

/// How synthetic ground truths are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    /// Gaussian factors orthonormalized by QR; singular values mildly decaying.
    RandomOrthonormal,
    /// Disjoint sign bands on the left, orthonormalized sign vectors on the
    /// right. Spreads the mass so the singular values sit near the maximum
    /// `a * sqrt(m1 m2 / r)` allowed by the entry bound.
    SignSpread,
}

/// A rank-`r` matrix `A0` in factored SVD form with a certified entry bound.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    dims: Dimensions,
    rank: usize,
    left: DMatrix<f64>,
    singular_values: Vec<f64>,
    right: DMatrix<f64>,
    entry_bound: f64,
    dense: DMatrix<f64>,
}

impl GroundTruth {
    /// Validates factors and singular values, reconstructs the dense matrix,
    /// and checks the entry bound.
    pub fn new(
        dims: Dimensions,
        left: DMatrix<f64>,
        singular_values: Vec<f64>,
        right: DMatrix<f64>,
        entry_bound: f64,
    ) -> Result<Self> {
        let rank = singular_values.len();
        if rank > dims.min_dim() {
            return Err(Error::param(format!(
                "rank must be at most {}, got {rank}",
                dims.min_dim()
            )));
        }
        if entry_bound < 0.0 || !entry_bound.is_finite() {
            return Err(Error::param("entry bound must be finite and nonnegative"));
        }
        if left.nrows() != dims.m1() || left.ncols() != rank {
            return Err(Error::dims(
                format!("{}x{rank}", dims.m1()),
                format!("{}x{}", left.nrows(), left.ncols()),
            ));
        }
        if right.nrows() != dims.m2() || right.ncols() != rank {
            return Err(Error::dims(
                format!("{}x{rank}", dims.m2()),
                format!("{}x{}", right.nrows(), right.ncols()),
            ));
        }
        for factors in [&left, &right] {
            let gram = factors.transpose() * factors;
            if (gram - DMatrix::identity(rank, rank)).norm() > ORTHONORMAL_TOL {
                return Err(Error::InvariantViolation(
                    "factor columns are not orthonormal".into(),
                ));
            }
        }
        let mut prev = f64::INFINITY;
        for &s in &singular_values {
            if !(s > 0.0) {
                return Err(Error::InvariantViolation(
                    "singular values must be strictly positive".into(),
                ));
            }
            if s > prev {
                return Err(Error::InvariantViolation(
                    "singular values must be nonincreasing".into(),
                ));
            }
            prev = s;
        }
        let mut dense = DMatrix::zeros(dims.m1(), dims.m2());
        for (k, &s) in singular_values.iter().enumerate() {
            dense += left.column(k) * right.column(k).transpose() * s;
        }
        let max_entry = dense.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        if max_entry > entry_bound + 1e-9 * entry_bound.max(1.0) {
            return Err(Error::InvariantViolation(format!(
                "max entry {max_entry} exceeds declared bound {entry_bound}"
            )));
        }
        Ok(GroundTruth {
            dims,
            rank,
            left,
            singular_values,
            right,
            entry_bound,
            dense,
        })
    }

    /// The zero matrix, rank 0. Outside the generated families but a valid
    /// member of every class.
    pub fn zero(dims: Dimensions) -> Self {
        Self::new(
            dims,
            DMatrix::zeros(dims.m1(), 0),
            Vec::new(),
            DMatrix::zeros(dims.m2(), 0),
            0.0,
        )
        .expect("zero truth is always valid")
    }

    /// Draws a ground truth from the given family, rescaled so the largest
    /// entry magnitude equals `entry_bound` exactly.
    pub fn generate(
        kind: TruthKind,
        dims: Dimensions,
        rank: usize,
        entry_bound: f64,
        seed: u64,
    ) -> Result<Self> {
        if rank == 0 || rank > dims.min_dim() {
            return Err(Error::param(format!(
                "rank must be in 1..={}, got {rank}",
                dims.min_dim()
            )));
        }
        if !(entry_bound > 0.0) {
            return Err(Error::param("entry bound must be positive"));
        }
        let mut rng = rng::stream_rng(seed, streams::TRUTH);
        let (left, right, raw_sv) = match kind {
            TruthKind::RandomOrthonormal => {
                let left = linalg::random_orthonormal(dims.m1(), rank, &mut rng);
                let right = linalg::random_orthonormal(dims.m2(), rank, &mut rng);
                // Mild decay keeps the values distinct but the same order.
                let sv: Vec<f64> = (0..rank)
                    .map(|j| 1.0 - 0.4 * j as f64 / rank.max(1) as f64)
                    .collect();
                (left, right, sv)
            }
            TruthKind::SignSpread => {
                let left = sign_band_factors(dims.m1(), rank);
                let right = orthonormalized_sign_factors(dims.m2(), rank, &mut rng)?;
                (left, right, vec![1.0; rank])
            }
        };
        // Rescale singular values so the max entry hits the bound exactly.
        let mut dense = DMatrix::zeros(dims.m1(), dims.m2());
        for (k, &s) in raw_sv.iter().enumerate() {
            dense += left.column(k) * right.column(k).transpose() * s;
        }
        let max_entry = dense.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        if max_entry <= 0.0 {
            return Err(Error::InvariantViolation(
                "degenerate ground-truth draw (zero matrix)".into(),
            ));
        }
        let scale = entry_bound / max_entry;
        let sv: Vec<f64> = raw_sv.iter().map(|s| s * scale).collect();
        Self::new(dims, left, sv, right, entry_bound)
    }

    pub fn dims(&self) -> Dimensions {
        self.dims
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn entry_bound(&self) -> f64 {
        self.entry_bound
    }

    pub fn left_factors(&self) -> &DMatrix<f64> {
        &self.left
    }

    pub fn right_factors(&self) -> &DMatrix<f64> {
        &self.right
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// The dense `A0`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.dense
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.dense[(row, col)]
    }

    /// Rebuilds a factored truth from a dense matrix via SVD, truncating the
    /// spectrum at `1e-10 * sigma_max`. Used when loading from files.
    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        let dims = Dimensions::new(a.nrows(), a.ncols())?;
        let (u, sigma, v) = linalg::svd_triple(a);
        let smax = sigma.iter().copied().fold(0.0_f64, f64::max);
        if smax <= 0.0 {
            return Ok(Self::zero(dims));
        }
        let mut kept: Vec<(usize, f64)> = sigma
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, s)| *s > 1e-10 * smax)
            .collect();
        kept.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite singular values"));
        let rank = kept.len();
        let mut left = DMatrix::zeros(a.nrows(), rank);
        let mut right = DMatrix::zeros(a.ncols(), rank);
        let mut sv = Vec::with_capacity(rank);
        for (dst, (src, s)) in kept.iter().enumerate() {
            left.set_column(dst, &u.column(*src));
            right.set_column(dst, &v.column(*src));
            sv.push(*s);
        }
        let bound = a.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        Self::new(dims, left, sv, right, bound)
    }
}

/// Left factors for [`TruthKind::SignSpread`]: `rank` disjoint row bands,
/// each an indicator normalized to unit length. Disjoint supports make the
/// columns exactly orthonormal.
fn sign_band_factors(rows: usize, rank: usize) -> DMatrix<f64> {
    let mut left = DMatrix::zeros(rows, rank);
    let base = rows / rank;
    let rem = rows % rank;
    let mut start = 0;
    for k in 0..rank {
        let h = base + usize::from(k < rem);
        let w = 1.0 / (h as f64).sqrt();
        for i in start..start + h {
            left[(i, k)] = w;
        }
        start += h;
    }
    left
}

/// Right factors for [`TruthKind::SignSpread`]: random sign vectors followed
/// by Gram-Schmidt, keeping entries close to `±1/sqrt(m2)`.
fn orthonormalized_sign_factors(
    rows: usize,
    rank: usize,
    rng: &mut impl Rng,
) -> Result<DMatrix<f64>> {
    let mut cols: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(rank);
    let mut attempts = 0;
    while cols.len() < rank {
        attempts += 1;
        if attempts > 64 * rank {
            return Err(Error::InvariantViolation(
                "failed to draw independent sign vectors".into(),
            ));
        }
        let mut v = nalgebra::DVector::from_fn(rows, |_, _| {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        });
        for c in &cols {
            let proj = c.dot(&v);
            v -= c * proj;
        }
        let norm = v.norm();
        if norm < 1e-6 * (rows as f64).sqrt() {
            continue;
        }
        cols.push(v / norm);
    }
    let mut right = DMatrix::zeros(rows, rank);
    for (k, c) in cols.iter().enumerate() {
        right.set_column(k, c);
    }
    Ok(right)
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

/// Tail class of the noise, the `beta` exponent of `E exp(|xi|^beta / u^beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiExponent {
    Finite(f64),
    /// Bounded noise; every psi-norm is finite and the log factor collapses.
    Unbounded,
}

impl PsiExponent {
    /// `log^{1/beta}(x)`, with the bounded case returning 1.
    pub fn log_factor(&self, x: f64) -> f64 {
        match self {
            PsiExponent::Finite(beta) => x.ln().max(0.0).powf(1.0 / beta),
            PsiExponent::Unbounded => 1.0,
        }
    }

    pub fn as_finite(&self) -> Option<f64> {
        match self {
            PsiExponent::Finite(b) => Some(*b),
            PsiExponent::Unbounded => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    Laplace,
    BoundedUniform,
}

/// Centered noise with standard deviation `sigma`.
///
/// All three kinds have variance exactly `sigma^2`; they differ in tail
/// class: Gaussian is psi_2, Laplace is psi_1, and the uniform kind is
/// supported on `[-sigma*sqrt(3), sigma*sqrt(3)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub sigma: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::param(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(NoiseModel { kind, sigma })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(NoiseKind::Gaussian, sigma)
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn psi_exponent(&self) -> PsiExponent {
        match self.kind {
            NoiseKind::Gaussian => PsiExponent::Finite(2.0),
            NoiseKind::Laplace => PsiExponent::Finite(1.0),
            NoiseKind::BoundedUniform => PsiExponent::Unbounded,
        }
    }

    /// An upper bound on the psi_beta norm of `|xi|`:
    /// the smallest `u` with `E exp(|xi|^beta/u^beta) <= 2` (or the sup for
    /// the bounded kind).
    pub fn psi_norm_bound(&self) -> f64 {
        match self.kind {
            // E exp(xi^2/u^2) = (1 - 2 sigma^2/u^2)^{-1/2} <= 2 at u^2 = (8/3) sigma^2.
            NoiseKind::Gaussian => self.sigma * (8.0 / 3.0_f64).sqrt(),
            // |xi| ~ Exp(b), b = sigma/sqrt(2); E exp(|xi|/u) <= 2 at u = 2b.
            NoiseKind::Laplace => self.sigma * 2.0_f64.sqrt(),
            NoiseKind::BoundedUniform => self.sigma * 3.0_f64.sqrt(),
        }
    }

    /// Almost-sure bound on `|xi|`, when one exists.
    pub fn sup_bound(&self) -> Option<f64> {
        match self.kind {
            NoiseKind::BoundedUniform => Some(self.sigma * 3.0_f64.sqrt()),
            _ => None,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        match self.kind {
            NoiseKind::Gaussian => {
                let normal = Normal::new(0.0, self.sigma).expect("sigma validated");
                normal.sample(rng)
            }
            NoiseKind::Laplace => {
                // Inverse CDF with scale b = sigma/sqrt(2).
                let b = self.sigma / 2.0_f64.sqrt();
                let u: f64 = rng.random::<f64>() - 0.5;
                -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            NoiseKind::BoundedUniform => {
                let half = self.sigma * 3.0_f64.sqrt();
                rng.random_range(-half..half)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// One observed entry: `value = A0[row, col] + noise`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Generating metadata carried by synthetic datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub rng_algorithm: String,
    pub sampling: String,
    pub truth: String,
    pub noise: NoiseModel,
}

/// A set of `n` observations on a fixed shape.
#[derive(Debug, Clone)]
pub struct Dataset {
    dims: Dimensions,
    entries: Vec<Observation>,
    provenance: Option<Provenance>,
}

impl Dataset {
    pub fn new(
        dims: Dimensions,
        entries: Vec<Observation>,
        provenance: Option<Provenance>,
    ) -> Result<Self> {
        for (i, obs) in entries.iter().enumerate() {
            if obs.row >= dims.m1() || obs.col >= dims.m2() {
                return Err(Error::InvariantViolation(format!(
                    "observation {i} at ({}, {}) is outside {dims}",
                    obs.row, obs.col
                )));
            }
            if !obs.value.is_finite() {
                return Err(Error::InvariantViolation(format!(
                    "observation {i} has non-finite value"
                )));
            }
        }
        Ok(Dataset {
            dims,
            entries,
            provenance,
        })
    }

    pub fn dims(&self) -> Dimensions {
        self.dims
    }

    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }
}

/// Draws `n` i.i.d. observations: index from `pi`, response
/// `A0[j,k] + xi`. Deterministic given `seed`.
pub fn generate_dataset(
    pi: &SamplingDistribution,
    truth: &GroundTruth,
    noise: &NoiseModel,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    if pi.dims() != truth.dims() {
        return Err(Error::dims(pi.dims().to_string(), truth.dims().to_string()));
    }
    if n == 0 {
        return Err(Error::param("need at least one observation"));
    }
    let mut rng = rng::stream_rng(seed, streams::DATASET);
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let (row, col) = pi.sample_index(&mut rng);
        let value = truth.entry(row, col) + noise.sample(&mut rng);
        entries.push(Observation { row, col, value });
    }
    let provenance = Provenance {
        seed,
        rng_algorithm: rng::RNG_ALGORITHM.to_string(),
        sampling: if pi.is_uniform() {
            "uniform".to_string()
        } else {
            "custom".to_string()
        },
        truth: format!(
            "rank-{} entry-bound {}",
            truth.rank(),
            truth.entry_bound()
        ),
        noise: *noise,
    };
    Dataset::new(truth.dims(), entries, Some(provenance))
}

/// Gaussian matrix helper used by searches and tests.
pub fn random_matrix(dims: Dimensions, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(dims.m1(), dims.m2(), |_, _| StandardNormal.sample(rng))
}
