//! Generalized inversion of actuation stages.

use nalgebra::{DMatrix, DVector};

/// Moore–Penrose pseudo-inverse via the singular value decomposition.
///
/// Singular values below `max(m, n) · σ_max · ε` are treated as zero, which
/// is the limit of the ridge form `(AᵀA + μI)⁻¹Aᵀ` as `μ → 0`.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return DMatrix::zeros(n, m);
    }
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let tol = m.max(n) as f64 * sigma_max * f64::EPSILON;
    // cannot fail: both factors were requested above
    svd.pseudo_inverse(tol).expect("svd with u and v")
}

/// Least-squares / minimum-norm control `U = A⁺λ` for a linearized
/// actuation stage `λ = A U`.
pub fn actuation_inverse_general(lambda: &DVector<f64>, a: &DMatrix<f64>) -> DVector<f64> {
    pseudo_inverse(a) * lambda
}
