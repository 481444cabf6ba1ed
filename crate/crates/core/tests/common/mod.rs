//! Test-only oracles, independent of the solver under test.
//!
//! The convex program
//!
//! ```text
//! min_Z  sum_jk w_jk Z_jk^2  -  2 <L, Z>  +  lambda ||Z||_*
//! ```
//!
//! is minimized here through the factored variational form of the nuclear
//! norm, `||Z||_* = min_{Z = U V^T} (||U||_F^2 + ||V||_F^2) / 2`, with the
//! factor width set to `min(m1, m2)` so the parametrization covers every
//! candidate. The resulting smooth objective is descended with a
//! backtracking gradient method from several random starts; the best factored
//! point (and the explicit zero candidate) wins by its convex objective
//! value. No SVD and no proximal step is involved, so the oracle shares no
//! code path with the estimator it checks.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Convex objective value for the weighted problem.
pub fn weighted_objective(
    w: &DMatrix<f64>,
    l: &DMatrix<f64>,
    z: &DMatrix<f64>,
    lambda: f64,
) -> f64 {
    let quad: f64 = w
        .iter()
        .zip(z.iter())
        .map(|(&wj, &zj)| wj * zj * zj)
        .sum();
    let lin: f64 = l.iter().zip(z.iter()).map(|(&a, &b)| a * b).sum();
    quad - 2.0 * lin + lambda * z.singular_values().iter().sum::<f64>()
}

fn factored_value(
    w: &DMatrix<f64>,
    l: &DMatrix<f64>,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    lambda: f64,
) -> f64 {
    let z = u * v.transpose();
    let quad: f64 = w
        .iter()
        .zip(z.iter())
        .map(|(&wj, &zj)| wj * zj * zj)
        .sum();
    let lin: f64 = l.iter().zip(z.iter()).map(|(&a, &b)| a * b).sum();
    quad - 2.0 * lin + 0.5 * lambda * (u.norm_squared() + v.norm_squared())
}

/// Minimizes the weighted nuclear-norm problem by factored gradient descent.
pub fn brute_force_min(
    w: &DMatrix<f64>,
    l: &DMatrix<f64>,
    lambda: f64,
    restarts: usize,
    iterations: usize,
    seed: u64,
) -> DMatrix<f64> {
    let (m1, m2) = (w.nrows(), w.ncols());
    let k = m1.min(m2);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let mut best = DMatrix::zeros(m1, m2);
    let mut best_val = weighted_objective(w, l, &best, lambda);

    for _ in 0..restarts {
        let mut u = DMatrix::from_fn(m1, k, |_, _| rng.random_range(-1.0..1.0));
        let mut v = DMatrix::from_fn(m2, k, |_, _| rng.random_range(-1.0..1.0));
        let mut step = 0.1;
        let mut h = factored_value(w, l, &u, &v, lambda);
        for _ in 0..iterations {
            let z = &u * v.transpose();
            // Gradient of the smooth quadratic part at Z.
            let g = DMatrix::from_fn(m1, m2, |j, c| 2.0 * w[(j, c)] * z[(j, c)] - 2.0 * l[(j, c)]);
            let gu = &g * &v + &u * lambda;
            let gv = g.transpose() * &u + &v * lambda;
            let gnorm2 = gu.norm_squared() + gv.norm_squared();
            if gnorm2 < 1e-26 {
                break;
            }
            // Backtracking on the factored objective.
            let mut accepted = false;
            for _ in 0..60 {
                let u_new = &u - &gu * step;
                let v_new = &v - &gv * step;
                let h_new = factored_value(w, l, &u_new, &v_new, lambda);
                if h_new <= h - 1e-4 * step * gnorm2 {
                    u = u_new;
                    v = v_new;
                    h = h_new;
                    step *= 1.25;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let z = &u * v.transpose();
        let val = weighted_objective(w, l, &z, lambda);
        if val < best_val {
            best_val = val;
            best = z;
        }
    }
    best
}

/// Random dense matrix helper for oracle tests.
#[allow(dead_code)]
pub fn random_dense(m1: usize, m2: usize, scale: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(m1, m2, |_, _| rng.random_range(-scale..scale))
}
