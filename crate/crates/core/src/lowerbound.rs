//! Minimax lower-bound geometry: a Varshamov-Gilbert style packing of
//! low-rank matrices, the Gaussian KL divergence between completion
//! experiments, and the separation/KL conditions the lower-bound argument
//! feeds into a two-point testing bound.
//!
//! Members are binary `m1 x r` blocks scaled by
//! `delta = (gamma / sqrt 2) (sigma ^ a) sqrt(m1 r / n)` and tiled
//! `floor(m2 / r)` times across the columns (zero-padded remainder), with
//! blocks kept only when their pairwise Hamming distance stays in
//! `[r m1 / 8, r m1]`. The squared Frobenius separation of two members is
//! `delta^2 * tiles * hamming`, which lands in the target bracket exactly
//! when `r` divides `m2`; otherwise the check accounts for the tiling
//! factor.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, spectral_norm};
use crate::model::{Dimensions, SamplingDistribution};
use crate::rng::{self, streams};

/// A packing of the class of rank-`r` matrices with entries bounded by `a`,
/// containing the zero matrix.
#[derive(Debug, Clone)]
pub struct PackingSet {
    pub dims: Dimensions,
    pub rank_budget: usize,
    /// Scale of the binary blocks.
    pub entry_magnitude: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub entry_bound: f64,
    pub n: usize,
    /// All members; index 0 is the zero matrix.
    pub members: Vec<DMatrix<f64>>,
    /// Minimum pairwise Hamming distance between the generating blocks.
    pub min_hamming: usize,
    pub seed: u64,
}

impl PackingSet {
    pub fn cardinality(&self) -> usize {
        self.members.len()
    }

    /// Number of block copies laid across the columns.
    pub fn tiles(&self) -> usize {
        self.dims.m2() / self.rank_budget
    }
}

fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b.iter()).filter(|(x, y)| x != y).count()
}

/// Builds the packing by rejection sampling of binary blocks.
///
/// Requires the lower-bound hypotheses `1 <= r <= m1 ^ m2`, `M r <= n`, and
/// the convention `m1 = M` (transpose the problem otherwise). Fails with the
/// achieved cardinality if `max_attempts` draws cannot reach the target
/// `ceil(2^{r m1 / 8}) + 1`.
#[allow(clippy::too_many_arguments)]
pub fn build_packing(
    dims: Dimensions,
    r: usize,
    sigma: f64,
    a: f64,
    n: usize,
    gamma: f64,
    seed: u64,
    max_attempts: usize,
) -> Result<PackingSet> {
    if dims.m1() < dims.m2() {
        return Err(Error::param(
            "packing construction assumes m1 >= m2 (m1 = M); transpose the problem",
        ));
    }
    if r == 0 || r > dims.min_dim() {
        return Err(Error::param(format!(
            "rank must be in 1..={}, got {r}",
            dims.min_dim()
        )));
    }
    if dims.max_dim() * r > n {
        return Err(Error::param(format!(
            "need M r <= n, got {} > {n}",
            dims.max_dim() * r
        )));
    }
    if !(sigma > 0.0) || !(a > 0.0) {
        return Err(Error::param("sigma and a must be positive"));
    }
    if !(gamma > 0.0) || gamma > 2.0_f64.sqrt() {
        return Err(Error::param(format!(
            "gamma must be in (0, sqrt 2] to keep entries within the class, got {gamma}"
        )));
    }

    let m1 = dims.m1();
    let bits = m1 * r;
    let delta = (gamma / 2.0_f64.sqrt()) * sigma.min(a) * (m1 as f64 * r as f64 / n as f64).sqrt();
    debug_assert!(delta <= a + 1e-12);
    let min_dist = (bits as f64 / 8.0).ceil() as usize;
    let target = (2.0_f64.powf(bits as f64 / 8.0).ceil() as usize) + 1;

    let mut rng = rng::stream_rng(seed, streams::SEARCH);
    let mut blocks: Vec<Vec<u8>> = vec![vec![0u8; bits]];
    let mut attempts = 0;
    while blocks.len() < target {
        if attempts >= max_attempts {
            return Err(Error::PackingExhausted {
                attempts,
                achieved: blocks.len(),
                target,
            });
        }
        attempts += 1;
        let candidate: Vec<u8> = (0..bits)
            .map(|_| u8::from(rand::Rng::random::<bool>(&mut rng)))
            .collect();
        if blocks.iter().all(|b| hamming(b, &candidate) >= min_dist) {
            blocks.push(candidate);
        }
    }

    let tiles = dims.m2() / r;
    let members: Vec<DMatrix<f64>> = blocks
        .iter()
        .map(|block| {
            let mut m = DMatrix::zeros(dims.m1(), dims.m2());
            for copy in 0..tiles {
                for col in 0..r {
                    for row in 0..m1 {
                        if block[row * r + col] == 1 {
                            m[(row, copy * r + col)] = delta;
                        }
                    }
                }
            }
            m
        })
        .collect();

    let mut min_hamming = bits;
    for i in 0..blocks.len() {
        for j in (i + 1)..blocks.len() {
            min_hamming = min_hamming.min(hamming(&blocks[i], &blocks[j]));
        }
    }

    Ok(PackingSet {
        dims,
        rank_budget: r,
        entry_magnitude: delta,
        gamma,
        sigma,
        entry_bound: a,
        n,
        members,
        min_hamming,
        seed,
    })
}

/// KL divergence between the Gaussian completion experiments at `0` and `A`:
/// `n / (2 sigma^2) * ||A||^2_{L2(Pi)}`.
pub fn kl_gaussian(pi: &SamplingDistribution, a: &DMatrix<f64>, sigma: f64, n: usize) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma must be positive"));
    }
    let norm_sq = pi.l2pi_inner(a, a)?;
    Ok(n as f64 / (2.0 * sigma * sigma) * norm_sq)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub pass: bool,
    /// Worst observed value (side depends on the condition).
    pub observed: f64,
    pub required: f64,
    pub margin: f64,
}

/// Verification of the packing against the lower-bound conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PackingConditionReport {
    /// Average KL over nonzero members vs `alpha log(Card - 1)`.
    pub kl_condition: ConditionCheck,
    /// Minimum pairwise spectral separation vs the proof threshold.
    pub spectral_separation: ConditionCheck,
    /// Minimum pairwise `L2(Pi)` separation vs the proof threshold.
    pub l2pi_separation: ConditionCheck,
    /// Pairwise squared Frobenius distances vs the construction bracket,
    /// using the actual tiling factor.
    pub frobenius_bracket: ConditionCheck,
    /// Every member is rank <= r with entries within the bound.
    pub class_membership: ConditionCheck,
    /// True when the packing has no nonzero pair to separate.
    pub trivial: bool,
    pub alpha: f64,
    pub cardinality: usize,
}

impl PackingConditionReport {
    pub fn all_pass(&self) -> bool {
        self.kl_condition.pass
            && self.spectral_separation.pass
            && self.l2pi_separation.pass
            && self.frobenius_bracket.pass
            && self.class_membership.pass
    }
}

/// Checks the three lower-bound conditions plus the construction bracket.
pub fn check_packing_conditions(
    packing: &PackingSet,
    pi: &SamplingDistribution,
    sigma: f64,
    alpha: f64,
) -> Result<PackingConditionReport> {
    if pi.dims() != packing.dims {
        return Err(Error::dims(
            pi.dims().to_string(),
            packing.dims.to_string(),
        ));
    }
    if !(alpha > 0.0) {
        return Err(Error::param("alpha must be positive"));
    }
    let card = packing.cardinality();
    let trivial = card < 2;
    let (c1, c1p) = pi.mass_bound_constants();
    let dims = packing.dims;
    let sa = sigma.min(packing.entry_bound);
    let m1 = dims.m1() as f64;
    let m2 = dims.m2() as f64;
    let nf = packing.n as f64;
    let r = packing.rank_budget as f64;
    let gamma = packing.gamma;

    // Class membership: rank and entry bound for every member.
    let mut class_ok = true;
    let mut worst_entry = 0.0_f64;
    for member in &packing.members {
        let max_entry = member.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        worst_entry = worst_entry.max(max_entry);
        if max_entry > packing.entry_bound + 1e-12
            || numerical_rank(member, 1e-10) > packing.rank_budget
        {
            class_ok = false;
        }
    }
    let class_membership = ConditionCheck {
        pass: class_ok,
        observed: worst_entry,
        required: packing.entry_bound,
        margin: packing.entry_bound - worst_entry,
    };

    // KL condition: mean over nonzero members <= alpha log(Card - 1).
    let kl_condition = if trivial {
        ConditionCheck {
            pass: true,
            observed: 0.0,
            required: 0.0,
            margin: 0.0,
        }
    } else {
        let mut total = 0.0;
        for member in &packing.members {
            total += kl_gaussian(pi, member, sigma, packing.n)?;
        }
        let mean = total / (card - 1) as f64;
        let required = alpha * ((card - 1) as f64).ln();
        ConditionCheck {
            pass: mean <= required,
            observed: mean,
            required,
            margin: required - mean,
        }
    };

    // Pairwise separations.
    let spectral_required =
        (c1 / c1p).sqrt() * (gamma / 16.0).sqrt() * sa * (m1 * m1 * m2 / nf).sqrt();
    let l2pi_required = c1 * gamma * gamma / 16.0 * sa * sa * m1 * r / nf;
    // Frobenius bracket with the effective column count r * tiles.
    let m2_eff = (packing.rank_budget * packing.tiles()) as f64;
    let frob_lo = gamma * gamma / 16.0 * sa * sa * m1 * m1 * m2_eff * r / nf;
    let frob_hi = gamma * gamma * sa * sa * m1 * m1 * m2_eff * r / nf;

    let mut min_spectral = f64::INFINITY;
    let mut min_l2pi = f64::INFINITY;
    let mut frob_ok = true;
    let mut worst_frob_margin = f64::INFINITY;
    for i in 0..card {
        for j in (i + 1)..card {
            let diff = &packing.members[i] - &packing.members[j];
            min_spectral = min_spectral.min(spectral_norm(&diff));
            min_l2pi = min_l2pi.min(pi.l2pi_inner(&diff, &diff)?);
            let fsq = diff.norm_squared();
            if fsq < frob_lo - 1e-9 * frob_lo || fsq > frob_hi + 1e-9 * frob_hi {
                frob_ok = false;
            }
            worst_frob_margin = worst_frob_margin.min((fsq - frob_lo).min(frob_hi - fsq));
        }
    }
    let (spectral_separation, l2pi_separation, frobenius_bracket) = if trivial {
        let vac = ConditionCheck {
            pass: true,
            observed: 0.0,
            required: 0.0,
            margin: 0.0,
        };
        (vac.clone(), vac.clone(), vac)
    } else {
        (
            ConditionCheck {
                pass: min_spectral >= spectral_required,
                observed: min_spectral,
                required: spectral_required,
                margin: min_spectral - spectral_required,
            },
            ConditionCheck {
                pass: min_l2pi >= l2pi_required,
                observed: min_l2pi,
                required: l2pi_required,
                margin: min_l2pi - l2pi_required,
            },
            ConditionCheck {
                pass: frob_ok,
                observed: worst_frob_margin,
                required: 0.0,
                margin: worst_frob_margin,
            },
        )
    };

    Ok(PackingConditionReport {
        kl_condition,
        spectral_separation,
        l2pi_separation,
        frobenius_bracket,
        class_membership,
        trivial,
        alpha,
        cardinality: card,
    })
}

/// Manifest written alongside the exported member CSVs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PackingManifest {
    pub dims: (usize, usize),
    pub rank: usize,
    pub gamma: f64,
    pub delta: f64,
    pub sigma: f64,
    pub entry_bound: f64,
    pub n: usize,
    pub cardinality: usize,
    pub min_hamming: usize,
    pub seed: u64,
    pub rng_algorithm: String,
    pub members: Vec<String>,
    pub conditions: PackingConditionReport,
}

/// Exports the packing as a directory of matrix CSVs plus a JSON manifest.
pub fn export_packing(
    packing: &PackingSet,
    report: &PackingConditionReport,
    dir: &std::path::Path,
) -> Result<PackingManifest> {
    std::fs::create_dir_all(dir)?;
    let mut names = Vec::with_capacity(packing.cardinality());
    for (idx, member) in packing.members.iter().enumerate() {
        let name = format!("member_{idx:03}.csv");
        crate::io::write_matrix_csv(member, None, &dir.join(&name))?;
        names.push(name);
    }
    let manifest = PackingManifest {
        dims: (packing.dims.m1(), packing.dims.m2()),
        rank: packing.rank_budget,
        gamma: packing.gamma,
        delta: packing.entry_magnitude,
        sigma: packing.sigma,
        entry_bound: packing.entry_bound,
        n: packing.n,
        cardinality: packing.cardinality(),
        min_hamming: packing.min_hamming,
        seed: packing.seed,
        rng_algorithm: rng::RNG_ALGORITHM.to_string(),
        members: names,
        conditions: report.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(manifest)
}
