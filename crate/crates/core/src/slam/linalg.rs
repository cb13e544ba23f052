//! Small dense helpers shared by the filter code.

use nalgebra::{Matrix2, SMatrix, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;

/// Diagonal jitter added when a matrix cannot be inverted.
pub const REGULARIZATION_EPS: f64 = 1e-9;

/// Inverts `m`, adding `REGULARIZATION_EPS` to the diagonal (repeatedly, growing
/// tenfold) when it is singular. The flag reports whether jitter was needed.
pub fn invert_regularized<const D: usize>(m: &SMatrix<f64, D, D>) -> (SMatrix<f64, D, D>, bool) {
    if let Some(inv) = m.try_inverse() {
        if inv.iter().all(|v| v.is_finite()) {
            return (inv, false);
        }
    }
    let mut eps = REGULARIZATION_EPS;
    loop {
        let reg = m + SMatrix::<f64, D, D>::identity() * eps;
        if let Some(inv) = reg.try_inverse() {
            if inv.iter().all(|v| v.is_finite()) {
                return (inv, true);
            }
        }
        eps *= 10.0;
        assert!(eps < 1e6, "matrix cannot be regularized");
    }
}

pub fn symmetrize<const D: usize>(m: &SMatrix<f64, D, D>) -> SMatrix<f64, D, D> {
    (m + m.transpose()) * 0.5
}

/// True when `m` is symmetric and its eigenvalues are ≥ −tol.
pub fn is_symmetric_psd<const D: usize>(m: &SMatrix<f64, D, D>, tol: f64) -> bool {
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > tol * scale {
        return false;
    }
    let sym = symmetrize(m);
    nalgebra::DMatrix::from_column_slice(D, D, sym.as_slice())
        .symmetric_eigenvalues()
        .iter()
        .all(|&l| l >= -tol * scale)
}

/// Draws from N(mean, cov) for a 2-D PSD covariance. A singular covariance
/// collapses the draw onto its support.
pub fn sample_gaussian2<R: Rng + ?Sized>(mean: &Vector2<f64>, cov: &Matrix2<f64>, rng: &mut R) -> Vector2<f64> {
    let a = cov[(0, 0)].max(0.0);
    let l11 = a.sqrt();
    let l21 = if l11 > 0.0 { cov[(1, 0)] / l11 } else { 0.0 };
    let l22 = (cov[(1, 1)] - l21 * l21).max(0.0).sqrt();
    let n1: f64 = rng.sample(StandardNormal);
    let n2: f64 = rng.sample(StandardNormal);
    Vector2::new(mean.x + l11 * n1, mean.y + l21 * n1 + l22 * n2)
}
