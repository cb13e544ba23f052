use nalgebra::{Matrix2, Matrix3, Matrix3x2, SMatrix, Vector2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::linalg::{invert_regularized, symmetrize};
use super::{
    measurement_jacobians, predict_measurement, wrap_angle, AnchorEstimate, AnchorKind, ControlInput, Jacobians,
    Measurement, Pose, SlamError,
};

/// Motion and measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Step-length standard deviation, meters.
    pub sigma_l: f64,
    /// Heading-change standard deviation, radians.
    pub sigma_phi: f64,
    /// Building-anchor measurement variance (`R`, per axis in offset mode).
    pub r_var: f64,
}

impl NoiseParams {
    /// Positional covariance contributed by one step of length `l` taken at
    /// heading `phi` (the control covariance `P_t` for a single step).
    pub fn control_cov(&self, l: f64, phi: f64) -> Matrix2<f64> {
        let g = step_jacobian(l, phi);
        let q = Matrix2::new(self.sigma_l.powi(2), 0.0, 0.0, self.sigma_phi.powi(2));
        let full = g * q * g.transpose();
        full.fixed_view::<2, 2>(0, 0).into_owned()
    }
}

fn step_jacobian(l: f64, phi: f64) -> Matrix3x2<f64> {
    let (s, c) = phi.sin_cos();
    Matrix3x2::new(c, -l * s, s, l * c, 0.0, 1.0)
}

/// One hypothesis: pose, its covariance over `(x, y, phi)`, importance
/// weight and a private anchor map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub pose: Pose,
    pub pose_cov: Matrix3<f64>,
    pub weight: f64,
    pub anchors: Vec<AnchorEstimate>,
}

impl Particle {
    pub fn new(pose: Pose, weight: f64) -> Self {
        Self {
            pose,
            pose_cov: Matrix3::zeros(),
            weight,
            anchors: Vec::new(),
        }
    }

    pub fn n_anchors(&self) -> usize {
        self.anchors.len()
    }

    pub fn position_cov(&self) -> Matrix2<f64> {
        self.pose_cov.fixed_view::<2, 2>(0, 0).into_owned()
    }

    /// Replaces the position with a refined one. `correction = I − K·J_s`
    /// carries the position/heading cross-covariance through the update; the
    /// heading variance is untouched.
    pub fn apply_refinement(&mut self, position: &Vector2<f64>, cov: &Matrix2<f64>, correction: &Matrix2<f64>) {
        self.pose.set_position(position);
        let cross: Vector2<f64> = correction * self.pose_cov.fixed_view::<2, 1>(0, 2);
        self.pose_cov.fixed_view_mut::<2, 2>(0, 0).copy_from(cov);
        self.pose_cov.fixed_view_mut::<2, 1>(0, 2).copy_from(&cross);
        self.pose_cov.fixed_view_mut::<1, 2>(2, 0).copy_from(&cross.transpose());
    }
}

/// Samples a step length and heading change around the control, turns, then
/// moves. The pose covariance is propagated to first order. Weight and map
/// are unchanged.
pub fn motion_update<R: Rng + ?Sized>(particle: &mut Particle, u: &ControlInput, noise: &NoiseParams, rng: &mut R) {
    let l = Normal::new(u.l_hat, noise.sigma_l.max(0.0))
        .expect("finite step noise")
        .sample(rng);
    let dphi = Normal::new(u.phi_hat, noise.sigma_phi.max(0.0))
        .expect("finite heading noise")
        .sample(rng);
    let phi = wrap_angle(particle.pose.phi + dphi);
    let (s, c) = phi.sin_cos();
    particle.pose = Pose {
        x: particle.pose.x + l * c,
        y: particle.pose.y + l * s,
        phi,
    };
    let f = Matrix3::new(1.0, 0.0, -l * s, 0.0, 1.0, l * c, 0.0, 0.0, 1.0);
    let g = step_jacobian(l, phi);
    let q = Matrix2::new(noise.sigma_l.powi(2), 0.0, 0.0, noise.sigma_phi.powi(2));
    particle.pose_cov = symmetrize(&(f * particle.pose_cov * f.transpose() + g * q * g.transpose()));
}

/// Multiplies the importance weight by a non-negative likelihood factor.
pub fn update_weight(particle: &mut Particle, factor: f64) {
    debug_assert!(factor >= 0.0);
    particle.weight *= factor.max(0.0);
}

/// Outcome of a map update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapChange {
    Added,
    Updated {
        regularized: bool,
    },
    /// Range measurement with the user on top of the anchor mean.
    Skipped,
}

/// Adds a new anchor at the particle position (`n_hat == n_anchors`) or
/// applies the EKF update `K = Σ·J_nᵀ·Q⁻¹`, `μ += K·(z − ẑ)`,
/// `Σ = (I − K·J_n)·Σ` to an existing one.
pub fn map_update(
    particle: &mut Particle,
    n_hat: usize,
    z: &Measurement,
    r_var: f64,
    detected: AnchorKind,
) -> Result<MapChange, SlamError> {
    let n = particle.anchors.len();
    if n_hat > n {
        return Err(SlamError::AnchorIndex { index: n_hat, len: n });
    }
    if n_hat == n {
        particle.anchors.push(AnchorEstimate::new(
            particle.pose.position(),
            Matrix2::identity() * r_var,
            detected,
        ));
        return Ok(MapChange::Added);
    }
    let mode = z.mode();
    let anchor = &particle.anchors[n_hat];
    let jac = match measurement_jacobians(&particle.pose, &anchor.mu, mode) {
        Ok(j) => j,
        Err(SlamError::DegenerateGeometry) => return Ok(MapChange::Skipped),
        Err(e) => return Err(e),
    };
    let z_hat = predict_measurement(&particle.pose, &anchor.mu, mode);
    let sigma = anchor.sigma;
    let (mu, new_sigma, regularized) = match (jac, z, z_hat) {
        (Jacobians::Offset, Measurement::Offset(z), Measurement::Offset(zh)) => ekf_landmark(
            &anchor.mu,
            &sigma,
            &Matrix2::identity(),
            &(Matrix2::identity() * r_var),
            &(z - zh),
        ),
        (Jacobians::Range { j_n }, Measurement::Range(z), Measurement::Range(zh)) => ekf_landmark(
            &anchor.mu,
            &sigma,
            &j_n,
            &SMatrix::<f64, 1, 1>::new(r_var),
            &SMatrix::<f64, 1, 1>::new(z - zh),
        ),
        _ => unreachable!("jacobian and prediction share the measurement mode"),
    };
    let anchor = &mut particle.anchors[n_hat];
    anchor.mu = mu;
    anchor.sigma = new_sigma;
    Ok(MapChange::Updated { regularized })
}

fn ekf_landmark<const D: usize>(
    mu: &Vector2<f64>,
    sigma: &Matrix2<f64>,
    j_n: &SMatrix<f64, D, 2>,
    r: &SMatrix<f64, D, D>,
    innovation: &SMatrix<f64, D, 1>,
) -> (Vector2<f64>, Matrix2<f64>, bool) {
    let q = j_n * sigma * j_n.transpose() + r;
    let (q_inv, reg) = invert_regularized(&q);
    let k = sigma * j_n.transpose() * q_inv;
    let ikj = Matrix2::identity() - k * j_n;
    // Joseph form keeps Σ symmetric PSD under round-off.
    let new_sigma = symmetrize(&(ikj * sigma * ikj.transpose() + k * r * k.transpose()));
    (mu + k * innovation, new_sigma, reg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slam::linalg::is_symmetric_psd;
    use crate::slam::MeasurementMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::FRAC_PI_2;

    fn quiet() -> NoiseParams {
        NoiseParams {
            sigma_l: 0.0,
            sigma_phi: 0.0,
            r_var: 0.25,
        }
    }

    #[test]
    fn deterministic_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = Particle::new(Pose::new(0.0, 0.0, 0.0), 0.3);
        motion_update(&mut p, &ControlInput::new(1.0, 0.0), &quiet(), &mut rng);
        assert!((p.pose.x - 1.0).abs() < 1e-15 && p.pose.y.abs() < 1e-15 && p.pose.phi == 0.0);
        assert_eq!(p.weight, 0.3);

        let mut p = Particle::new(Pose::new(0.0, 0.0, FRAC_PI_2), 1.0);
        motion_update(&mut p, &ControlInput::new(2.0, 0.0), &quiet(), &mut rng);
        assert!(p.pose.x.abs() < 1e-12 && (p.pose.y - 2.0).abs() < 1e-12);
        assert_eq!(p.pose.phi, FRAC_PI_2);
        assert_eq!(p.pose_cov, Matrix3::zeros());
    }

    #[test]
    fn heading_turns_before_moving() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = Particle::new(Pose::new(0.0, 0.0, 0.0), 1.0);
        motion_update(&mut p, &ControlInput::new(1.0, FRAC_PI_2), &quiet(), &mut rng);
        assert!(p.pose.x.abs() < 1e-12 && (p.pose.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_length_noise_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = NoiseParams {
            sigma_l: 0.1,
            sigma_phi: 0.0,
            r_var: 1.0,
        };
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let mut p = Particle::new(Pose::new(0.0, 0.0, 0.0), 1.0);
            motion_update(&mut p, &ControlInput::new(1.0, 0.0), &noise, &mut rng);
            sum += p.pose.x;
        }
        let mean = sum / n as f64;
        assert!((mean - 1.0).abs() <= 3.0 * 0.1 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn covariance_grows_with_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = NoiseParams {
            sigma_l: 0.05,
            sigma_phi: 0.02,
            r_var: 1.0,
        };
        let mut p = Particle::new(Pose::new(0.0, 0.0, 0.0), 1.0);
        let mut last = 0.0;
        for _ in 0..50 {
            motion_update(&mut p, &ControlInput::new(0.7, 0.01), &noise, &mut rng);
            let tr = p.position_cov().trace();
            assert!(tr > last);
            last = tr;
            assert!(is_symmetric_psd(&p.pose_cov, 1e-9));
            assert!(p.pose.phi > -std::f64::consts::PI && p.pose.phi <= std::f64::consts::PI);
        }
        // one step from an exact pose contributes exactly the control covariance
        let mut q = Particle::new(Pose::new(0.0, 0.0, 0.0), 1.0);
        let noise = NoiseParams {
            sigma_phi: 0.0,
            ..noise
        };
        motion_update(&mut q, &ControlInput::new(0.7, 0.0), &noise, &mut rng);
        assert!(
            (q.position_cov() - noise.control_cov(q.pose.distance_to(&Pose::new(0.0, 0.0, 0.0)), 0.0)).amax() < 1e-12
        );
    }

    #[test]
    fn weights() {
        let mut p = Particle::new(Pose::new(0.0, 0.0, 0.0), 0.5);
        update_weight(&mut p, 0.4);
        assert!((p.weight - 0.2).abs() < 1e-15);
        update_weight(&mut p, 1.0);
        assert!((p.weight - 0.2).abs() < 1e-15);
        update_weight(&mut p, 0.0);
        assert_eq!(p.weight, 0.0);
    }

    #[test]
    fn new_anchor_initialized_at_pose() {
        let mut p = Particle::new(Pose::new(2.0, 3.0, 0.0), 1.0);
        let z = Measurement::Offset(Vector2::new(0.1, -0.2));
        assert_eq!(
            map_update(&mut p, 0, &z, 0.25, AnchorKind(2)).unwrap(),
            MapChange::Added
        );
        assert_eq!(p.n_anchors(), 1);
        assert_eq!(p.anchors[0].mu, Vector2::new(2.0, 3.0));
        assert_eq!(p.anchors[0].sigma, Matrix2::identity() * 0.25);
        assert_eq!(p.anchors[0].kind, AnchorKind(2));
        assert!(map_update(&mut p, 5, &z, 0.25, AnchorKind(2)).is_err());
    }

    #[test]
    fn reobservation_with_zero_innovation_shrinks_covariance() {
        let mut p = Particle::new(Pose::new(0.0, 0.0, 0.0), 1.0);
        p.anchors.push(AnchorEstimate::new(
            Vector2::new(1.0, 2.0),
            Matrix2::new(1.0, 0.2, 0.2, 0.5),
            AnchorKind(0),
        ));
        let z = predict_measurement(&p.pose, &p.anchors[0].mu, MeasurementMode::Offset);
        let before = p.anchors[0].clone();
        map_update(&mut p, 0, &z, 0.5, AnchorKind(0)).unwrap();
        assert!((p.anchors[0].mu - before.mu).norm() < 1e-15);
        assert!(p.anchors[0].sigma.trace() < before.sigma.trace());
        // per-axis scalar Kalman oracle on a diagonal case
        let mut p = Particle::new(Pose::new(0.0, 0.0, 0.0), 1.0);
        p.anchors.push(AnchorEstimate::new(
            Vector2::new(1.0, 2.0),
            Matrix2::new(2.0, 0.0, 0.0, 0.5),
            AnchorKind(0),
        ));
        map_update(
            &mut p,
            0,
            &Measurement::Offset(Vector2::new(1.5, 2.0)),
            1.0,
            AnchorKind(0),
        )
        .unwrap();
        let (kx, ky) = (2.0 / 3.0, 0.5 / 1.5);
        assert!((p.anchors[0].mu.x - (1.0 + kx * 0.5)).abs() < 1e-12);
        assert!((p.anchors[0].mu.y - 2.0).abs() < 1e-12);
        assert!((p.anchors[0].sigma[(0, 0)] - (1.0 - kx) * 2.0).abs() < 1e-12);
        assert!((p.anchors[0].sigma[(1, 1)] - (1.0 - ky) * 0.5).abs() < 1e-12);
    }

    #[test]
    fn repeated_reobservation_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let truth = Vector2::new(4.0, -1.0);
        for mode in [MeasurementMode::Offset, MeasurementMode::Range] {
            let mut p = Particle::new(Pose::new(0.0, 0.0, 0.0), 1.0);
            p.anchors.push(AnchorEstimate::new(
                Vector2::new(4.6, -1.5),
                Matrix2::identity(),
                AnchorKind(0),
            ));
            let r_var: f64 = 0.01;
            let mut last_trace = f64::INFINITY;
            for k in 0..200 {
                // vary the vantage point so range mode observes both axes
                let ang = k as f64 * 0.37;
                p.pose = Pose::new(truth.x + 3.0 * ang.cos(), truth.y + 3.0 * ang.sin(), 0.0);
                let clean = predict_measurement(&p.pose, &truth, mode);
                let z = match clean {
                    Measurement::Offset(v) => Measurement::Offset(
                        v + Vector2::new(
                            rng.sample::<f64, _>(StandardNormal),
                            rng.sample::<f64, _>(StandardNormal),
                        ) * r_var.sqrt(),
                    ),
                    Measurement::Range(d) => {
                        Measurement::Range(d + rng.sample::<f64, _>(StandardNormal) * r_var.sqrt())
                    }
                };
                map_update(&mut p, 0, &z, r_var, AnchorKind(0)).unwrap();
                let tr = p.anchors[0].sigma.trace();
                if mode == MeasurementMode::Offset {
                    assert!(tr <= last_trace + 1e-15);
                }
                last_trace = tr;
                assert!(is_symmetric_psd(&p.anchors[0].sigma, 1e-9));
            }
            assert!((p.anchors[0].mu - truth).norm() < 0.05, "{mode:?}: {}", p.anchors[0].mu);
            assert!(last_trace < 1e-3);
        }
    }
}
