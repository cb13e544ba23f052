use nalgebra::{SMatrix, SVector};

use super::SlamError;

/// Expected post-encounter error predicted by the linear (offset-mode)
/// analysis:
///
/// `E[Ψ] = Ψ_prev + [I + (R + Σ_anchor)·P⁻¹]⁻¹ · (Ψ_anchor − Ψ_prev)`.
///
/// With an exact anchor (`Σ_anchor = 0`, `Ψ_anchor = 0`) this reduces to
/// `(I − [I + R·P⁻¹]⁻¹)·Ψ_prev`.
pub fn expected_error_contraction<const D: usize>(
    psi_prev: &SVector<f64, D>,
    r: &SMatrix<f64, D, D>,
    sigma_anchor: &SMatrix<f64, D, D>,
    p: &SMatrix<f64, D, D>,
    psi_anchor: &SVector<f64, D>,
) -> Result<SVector<f64, D>, SlamError> {
    let p_inv = p.try_inverse().ok_or(SlamError::Singular("control covariance P"))?;
    let m = SMatrix::<f64, D, D>::identity() + (r + sigma_anchor) * p_inv;
    let gain = m.try_inverse().ok_or(SlamError::Singular("I + (R + Σ)·P⁻¹"))?;
    Ok(psi_prev + gain * (psi_anchor - psi_prev))
}

/// The contraction matrix `[I + (R + Σ_anchor)·P⁻¹]⁻¹` itself.
pub fn contraction_matrix<const D: usize>(
    r: &SMatrix<f64, D, D>,
    sigma_anchor: &SMatrix<f64, D, D>,
    p: &SMatrix<f64, D, D>,
) -> Result<SMatrix<f64, D, D>, SlamError> {
    let p_inv = p.try_inverse().ok_or(SlamError::Singular("control covariance P"))?;
    (SMatrix::<f64, D, D>::identity() + (r + sigma_anchor) * p_inv)
        .try_inverse()
        .ok_or(SlamError::Singular("I + (R + Σ)·P⁻¹"))
}
