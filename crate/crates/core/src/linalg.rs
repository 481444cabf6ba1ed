//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::DMatrix;

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

/// Sum of singular values (Schatten-1).
pub fn nuclear_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().iter().sum()
}

/// Frobenius norm.
pub fn frobenius_norm(a: &DMatrix<f64>) -> f64 {
    a.norm()
}

/// Trace inner product `tr(A^T B)`.
pub fn trace_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = a.singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Thin SVD as `(U, sigma, V)` with `A = U diag(sigma) V^T`.
///
/// No ordering of the singular values is assumed anywhere in this crate.
pub fn svd_triple(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("svd with vectors");
    let vt = svd.v_t.expect("svd with vectors");
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    (u, sigma, vt.transpose())
}

/// Orthonormal columns spanning the column space of a Gaussian draw.
pub fn random_orthonormal(
    rows: usize,
    cols: usize,
    rng: &mut impl rand::Rng,
) -> DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    assert!(cols <= rows, "need at least as many rows as columns");
    let g: DMatrix<f64> = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    // Fix the sign convention so the factor is a deterministic function of g.
    let r = qr.r();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            for i in 0..rows {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn norms_on_diag() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0]));
        assert!((spectral_norm(&a) - 3.0).abs() < 1e-12);
        assert!((nuclear_norm(&a) - 4.0).abs() < 1e-12);
        assert!((frobenius_norm(&a) - 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn spectral_below_frobenius() {
        let mut rng = rng_from_seed(3);
        for _ in 0..20 {
            let a = DMatrix::from_fn(4, 5, |_, _| {
                rand::Rng::random_range(&mut rng, -1.0..1.0)
            });
            assert!(spectral_norm(&a) <= frobenius_norm(&a) + 1e-12);
            assert!(nuclear_norm(&a) + 1e-12 >= frobenius_norm(&a));
        }
    }

    #[test]
    fn orthonormal_factor() {
        let mut rng = rng_from_seed(11);
        let q = random_orthonormal(6, 3, &mut rng);
        let gram = q.transpose() * &q;
        assert!((gram - DMatrix::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn svd_reconstructs() {
        let mut rng = rng_from_seed(5);
        let a = DMatrix::from_fn(3, 4, |_, _| rand::Rng::random_range(&mut rng, -2.0..2.0));
        let (u, s, v) = svd_triple(&a);
        let mut rec = DMatrix::zeros(3, 4);
        for (k, sk) in s.iter().enumerate() {
            rec += u.column(k) * v.column(k).transpose() * *sk;
        }
        assert!((rec - a).norm() < 1e-10);
    }

    #[test]
    fn rank_counts_spectrum() {
        let a = DMatrix::from_fn(4, 4, |i, j| ((i + 1) * (j + 1)) as f64);
        assert_eq!(numerical_rank(&a, 1e-10), 1);
        assert_eq!(numerical_rank(&DMatrix::zeros(3, 3), 1e-10), 0);
    }
}
