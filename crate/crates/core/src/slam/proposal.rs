//! Kalman refinement of a particle position against an anchor.
//!
//! The proposal is computed in gain form, `K = P·J_sᵀ·(J_s·P·J_sᵀ + Q)⁻¹`,
//! `Σ = (I − K·J_s)·P`, which equals the information form
//! `Σ = (J_sᵀ·Q⁻¹·J_s + P⁻¹)⁻¹`, `K = Σ·J_sᵀ·Q⁻¹` whenever `P` is invertible,
//! and stays defined for an exact prior (`P = 0`).
//!
//! `P` is the particle's accumulated position covariance, and the particle's
//! predicted position is already one draw from that prior. The refined pose
//! is therefore drawn from `N(μ, K·Q·Kᵀ)`: the prior spread shrunk by
//! `(I − K·J_s)` plus this term gives a population whose covariance is the
//! proposal covariance `Σ`, without counting the prior spread twice.

use nalgebra::{Matrix2, RowVector2, SMatrix, SVector, Vector1, Vector2};
use rand::Rng;

use super::linalg::{invert_regularized, sample_gaussian2, symmetrize};
use super::{measurement_jacobians, predict_measurement, AnchorEstimate, Jacobians, Measurement, Pose, SlamError};

/// Gaussian proposal for the refined position plus the sampled pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
    /// Spread of the draw around `mean`, `K·Q·Kᵀ`.
    pub sample_cov: Matrix2<f64>,
    /// `I − K·J_s`; maps prior cross-covariances to posterior ones.
    pub correction: Matrix2<f64>,
    pub sample: Pose,
    pub regularized: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    mean: Vector2<f64>,
    cov: Matrix2<f64>,
    correction: Matrix2<f64>,
    regularized: bool,
    kqk: Matrix2<f64>,
}

fn gain_update<const D: usize>(
    s_hat: &Vector2<f64>,
    prior: &Matrix2<f64>,
    j_s: &SMatrix<f64, D, 2>,
    q: &SMatrix<f64, D, D>,
    innovation: &SVector<f64, D>,
) -> Linear {
    let (_, q_singular) = invert_regularized(q);
    let q = if q_singular {
        q + SMatrix::<f64, D, D>::identity() * super::linalg::REGULARIZATION_EPS
    } else {
        *q
    };
    let s = j_s * prior * j_s.transpose() + q;
    let (s_inv, s_reg) = invert_regularized(&s);
    let k = prior * j_s.transpose() * s_inv;
    let correction = Matrix2::identity() - k * j_s;
    let cov = symmetrize(&(correction * prior * correction.transpose() + k * q * k.transpose()));
    Linear {
        mean: s_hat + k * innovation,
        cov,
        correction,
        regularized: q_singular || s_reg,
        kqk: symmetrize(&(k * q * k.transpose())),
    }
}

/// Linearizes the measurement about `lin` and returns the Gaussian update of
/// the prior `(s_hat, prior)`. With `lin == s_hat` this is the ordinary EKF
/// step; other linearization points give the iterated-EKF step.
fn linearized_update(
    s_hat: &Pose,
    prior: &Matrix2<f64>,
    anchor: &AnchorEstimate,
    z: &Measurement,
    r_var: f64,
    lin: &Vector2<f64>,
) -> Result<Linear, SlamError> {
    let mode = z.mode();
    let lin_pose = Pose {
        x: lin.x,
        y: lin.y,
        phi: s_hat.phi,
    };
    let z_hat = predict_measurement(&lin_pose, &anchor.mu, mode);
    let jac = measurement_jacobians(&lin_pose, &anchor.mu, mode)?;
    let dx = s_hat.position() - lin;
    let sh = s_hat.position();
    Ok(match (jac, z, z_hat) {
        (Jacobians::Offset, Measurement::Offset(z), Measurement::Offset(zh)) => {
            let j_s = -Matrix2::identity();
            let q = anchor.sigma + Matrix2::identity() * r_var;
            let innov = z - zh - j_s * dx;
            gain_update(&sh, prior, &j_s, &q, &innov)
        }
        (Jacobians::Range { j_n }, Measurement::Range(z), Measurement::Range(zh)) => {
            let j_s: RowVector2<f64> = -j_n;
            let q = j_n * anchor.sigma * j_n.transpose() + SMatrix::<f64, 1, 1>::new(r_var);
            let innov = Vector1::new(z - zh) - j_s * dx;
            gain_update(&sh, prior, &j_s, &q, &innov)
        }
        _ => unreachable!("jacobian and prediction share the measurement mode"),
    })
}

fn finish<R: Rng + ?Sized>(s_hat: &Pose, lin: Linear, iterations: usize, rng: &mut R) -> Proposal {
    let p = sample_gaussian2(&lin.mean, &lin.kqk, rng);
    Proposal {
        mean: lin.mean,
        cov: lin.cov,
        sample_cov: lin.kqk,
        correction: lin.correction,
        sample: Pose {
            x: p.x,
            y: p.y,
            phi: s_hat.phi,
        },
        regularized: lin.regularized,
        iterations,
    }
}

/// One-shot refinement: EKF proposal about the predicted position, then one
/// draw from it. Heading is carried over unchanged.
pub fn refine_particle_position<R: Rng + ?Sized>(
    s_hat: &Pose,
    prior: &Matrix2<f64>,
    anchor: &AnchorEstimate,
    z: &Measurement,
    r_var: f64,
    rng: &mut R,
) -> Result<Proposal, SlamError> {
    let lin = linearized_update(s_hat, prior, anchor, z, r_var, &s_hat.position())?;
    Ok(finish(s_hat, lin, 1, rng))
}

/// Negative log posterior (up to a constant) of placing the user at `x`.
fn map_cost(
    x: &Vector2<f64>,
    s_hat: &Pose,
    prior_inv: &Matrix2<f64>,
    anchor: &AnchorEstimate,
    z: &Measurement,
    r_var: f64,
) -> f64 {
    let dx = x - s_hat.position();
    let prior_term = (dx.transpose() * prior_inv * dx)[(0, 0)];
    let pose = Pose {
        x: x.x,
        y: x.y,
        phi: s_hat.phi,
    };
    let meas_term = match (z, predict_measurement(&pose, &anchor.mu, z.mode())) {
        (Measurement::Offset(z), Measurement::Offset(zh)) => {
            let (q_inv, _) = invert_regularized(&(anchor.sigma + Matrix2::identity() * r_var));
            let nu = z - zh;
            (nu.transpose() * q_inv * nu)[(0, 0)]
        }
        (Measurement::Range(z), Measurement::Range(zh)) => {
            let q = match measurement_jacobians(&pose, &anchor.mu, super::MeasurementMode::Range) {
                Ok(Jacobians::Range { j_n }) => (j_n * anchor.sigma * j_n.transpose())[(0, 0)] + r_var,
                _ => r_var,
            };
            (z - zh).powi(2) / q.max(super::linalg::REGULARIZATION_EPS)
        }
        _ => unreachable!("prediction shares the measurement mode"),
    };
    0.5 * (prior_term + meas_term)
}

const MAX_BACKTRACKS: usize = 12;

/// Iterative refinement: the proposal mean is recomputed, relinearizing the
/// measurement at the latest mean, until two successive means differ by less
/// than `beta` or `max_iters` is reached. A single pose is drawn at the end.
///
/// Each relinearized step is halved until it lowers the posterior cost, so
/// strongly nonlinear range geometry cannot make the iterates oscillate.
#[allow(clippy::too_many_arguments)]
pub fn refine_particle_position_iterated<R: Rng + ?Sized>(
    s_hat: &Pose,
    prior: &Matrix2<f64>,
    anchor: &AnchorEstimate,
    z: &Measurement,
    r_var: f64,
    beta: f64,
    max_iters: usize,
    rng: &mut R,
) -> Result<Proposal, SlamError> {
    let (prior_inv, _) = invert_regularized(prior);
    let cost = |x: &Vector2<f64>| map_cost(x, s_hat, &prior_inv, anchor, z, r_var);
    let mut lin_point = s_hat.position();
    let mut cur = linearized_update(s_hat, prior, anchor, z, r_var, &lin_point)?;
    let mut regularized = cur.regularized;
    let mut iterations = 1;
    let mut cur_cost = cost(&cur.mean);
    while iterations < max_iters.max(1) && (cur.mean - lin_point).norm() >= beta {
        let base = cur.mean;
        let next = match linearized_update(s_hat, prior, anchor, z, r_var, &base) {
            Ok(next) => next,
            // The iterate landed on the anchor; keep the last good update.
            Err(SlamError::DegenerateGeometry) => break,
            Err(e) => return Err(e),
        };
        let mut step = next.mean - base;
        let mut candidate = next.mean;
        let mut candidate_cost = cost(&candidate);
        for _ in 0..MAX_BACKTRACKS {
            if candidate_cost <= cur_cost {
                break;
            }
            step *= 0.5;
            candidate = base + step;
            candidate_cost = cost(&candidate);
        }
        lin_point = base;
        regularized |= next.regularized;
        cur = Linear {
            mean: candidate,
            ..next
        };
        cur_cost = candidate_cost;
        iterations += 1;
    }
    cur.regularized = regularized;
    Ok(finish(s_hat, cur, iterations, rng))
}
