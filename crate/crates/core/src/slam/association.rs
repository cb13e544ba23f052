use std::f64::consts::PI;

use nalgebra::{Matrix2, SMatrix};
use serde::{Deserialize, Serialize};

use super::linalg::invert_regularized;
use super::{
    measurement_jacobians, predict_measurement, AnchorKind, ConfusionMatrix, Jacobians, Measurement, Particle,
};

/// Data-association outcome for one particle. Index `i < n_anchors` refers to
/// an existing anchor; index `n_anchors` is the new-anchor hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationResult {
    /// Normalized over all hypotheses.
    pub probabilities: Vec<f64>,
    /// Unnormalized likelihoods (Gaussian density times type probability).
    pub likelihoods: Vec<f64>,
    pub n_hat: usize,
}

impl AssociationResult {
    pub fn is_new(&self) -> bool {
        self.n_hat + 1 == self.probabilities.len()
    }

    pub fn likelihood(&self) -> f64 {
        self.likelihoods[self.n_hat]
    }
}

fn gaussian_density<const D: usize>(q: &SMatrix<f64, D, D>, nu: &SMatrix<f64, D, 1>) -> f64 {
    let (q_inv, _) = invert_regularized(q);
    let det = nalgebra::DMatrix::from_column_slice(D, D, (q * (2.0 * PI)).as_slice()).determinant();
    if !(det > 0.0) {
        return 0.0;
    }
    let m = (nu.transpose() * q_inv * nu)[(0, 0)];
    det.powf(-0.5) * (-0.5 * m).exp()
}

/// Likelihood that the observation `z` of a pattern detected as `detected`
/// came from each anchor in the particle's map, or from a new one.
///
/// The innovation covariance for anchor `n` is
/// `J_n·Σ_n·J_nᵀ + J_s·P·J_sᵀ + R`, where `P` is the particle's own position
/// covariance. The new-anchor hypothesis scores `p0·p(detected | detected)`.
/// Ties go to the lowest index.
pub fn association_likelihoods(
    particle: &Particle,
    z: &Measurement,
    detected: AnchorKind,
    confusion: &ConfusionMatrix,
    p0: f64,
    r_var: f64,
) -> AssociationResult {
    let mode = z.mode();
    let p_pose = particle.position_cov();
    let mut likelihoods = Vec::with_capacity(particle.anchors.len() + 1);
    for anchor in &particle.anchors {
        let type_p = confusion.p(anchor.kind, detected);
        if type_p == 0.0 {
            likelihoods.push(0.0);
            continue;
        }
        let z_hat = predict_measurement(&particle.pose, &anchor.mu, mode);
        let jac = measurement_jacobians(&particle.pose, &anchor.mu, mode);
        let density = match (jac, z, z_hat) {
            (Ok(Jacobians::Offset), Measurement::Offset(z), Measurement::Offset(zh)) => {
                let q = anchor.sigma + p_pose + Matrix2::identity() * r_var;
                gaussian_density(&q, &(z - zh))
            }
            (Ok(Jacobians::Range { j_n }), Measurement::Range(z), Measurement::Range(zh)) => {
                let q = j_n * (anchor.sigma + p_pose) * j_n.transpose() + SMatrix::<f64, 1, 1>::new(r_var);
                gaussian_density(&q, &SMatrix::<f64, 1, 1>::new(z - zh))
            }
            // On top of the anchor mean the range direction is undefined;
            // score the raw range against the measurement noise alone.
            (Err(_), Measurement::Range(z), Measurement::Range(zh)) => {
                gaussian_density(&SMatrix::<f64, 1, 1>::new(r_var), &SMatrix::<f64, 1, 1>::new(z - zh))
            }
            _ => 0.0,
        };
        likelihoods.push(density * type_p);
    }
    likelihoods.push(p0 * confusion.p(detected, detected));

    let total: f64 = likelihoods.iter().sum();
    let n_new = likelihoods.len() - 1;
    let probabilities: Vec<f64> = if total > 0.0 && total.is_finite() {
        likelihoods.iter().map(|l| l / total).collect()
    } else {
        (0..likelihoods.len())
            .map(|i| if i == n_new { 1.0 } else { 0.0 })
            .collect()
    };
    let mut n_hat = n_new;
    if total > 0.0 && total.is_finite() {
        n_hat = 0;
        for (i, p) in probabilities.iter().enumerate() {
            if *p > probabilities[n_hat] {
                n_hat = i;
            }
        }
    }
    AssociationResult {
        probabilities,
        likelihoods,
        n_hat,
    }
}
