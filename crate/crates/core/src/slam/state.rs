//! Per-user filter state and the step composition.

use nalgebra::{Matrix2, Vector2};
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::{
    association_likelihoods, map_update, motion_update, refine_particle_position, refine_particle_position_iterated,
    update_weight, AnchorEstimate, AnchorKind, ConfusionMatrix, ControlInput, MapChange, Measurement, MeasurementMode,
    NoiseParams, Particle, Pose, Proposal, SlamError,
};

/// What a user broadcasts: the max-weight particle's pose and position
/// covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PublishedEstimate {
    pub pose: Pose,
    pub cov: Matrix2<f64>,
}

impl PublishedEstimate {
    pub fn as_anchor(&self) -> AnchorEstimate {
        AnchorEstimate::new(self.pose.position(), self.cov, AnchorKind(0))
    }

    pub fn confidence_trace(&self) -> f64 {
        self.cov.trace()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub regularizations: u64,
    pub degenerate_refinements: u64,
    pub degeneracy_resets: u64,
    pub resamples: u64,
    pub refine_iterations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SamplingMode {
    OneShot,
    Iterative { beta: f64, max_iters: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlamConfig {
    pub noise: NoiseParams,
    pub mode: MeasurementMode,
    pub sampling: SamplingMode,
    pub confusion: ConfusionMatrix,
    /// Prior score of the new-anchor hypothesis.
    pub p0: f64,
}

/// An observation available at one step.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    /// Relative measurement to another user whose estimate is frozen in
    /// `partner`.
    Human {
        partner: PublishedEstimate,
        z: Measurement,
        r_var: f64,
    },
    /// A building-anchor pattern.
    Building { z: Measurement, detected: AnchorKind },
}

/// What happened during one `slam_step`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepOutcome {
    pub human_update: bool,
    pub building_update: bool,
    pub resampled: bool,
    pub new_anchors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlamState {
    pub user_id: usize,
    pub particles: Vec<Particle>,
    pub published: PublishedEstimate,
    pub diagnostics: Diagnostics,
}

impl SlamState {
    /// `m` identical particles at an exactly known starting pose.
    pub fn new(user_id: usize, start: Pose, m: usize) -> Result<Self, SlamError> {
        if m == 0 {
            return Err(SlamError::NoParticles);
        }
        let particles = vec![Particle::new(start, 1.0 / m as f64); m];
        Ok(Self {
            user_id,
            published: PublishedEstimate {
                pose: start,
                cov: Matrix2::zeros(),
            },
            particles,
            diagnostics: Diagnostics::default(),
        })
    }

    /// Seeds every particle's map with anchors (e.g. surveyed locations).
    pub fn with_anchors(mut self, anchors: &[AnchorEstimate]) -> Self {
        for p in &mut self.particles {
            p.anchors.extend_from_slice(anchors);
        }
        self
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    pub fn effective_sample_size(&self) -> f64 {
        let s = self.weight_sum();
        if s <= 0.0 {
            return 0.0;
        }
        1.0 / self.particles.iter().map(|p| (p.weight / s).powi(2)).sum::<f64>()
    }

    fn max_weight_index(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.particles.iter().enumerate() {
            if p.weight > self.particles[best].weight {
                best = i;
            }
        }
        best
    }

    /// Refreshes the published estimate from the max-weight particle.
    pub fn publish(&mut self) {
        let p = &self.particles[self.max_weight_index()];
        self.published = PublishedEstimate {
            pose: p.pose,
            cov: p.position_cov(),
        };
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("state serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, SlamError> {
        serde_json::from_str(s).map_err(|e| SlamError::Snapshot(e.to_string()))
    }
}

/// Normalizes weights, publishes the max-weight particle, then draws `M`
/// particles with replacement in proportion to weight and resets weights to
/// `1/M`. If every weight is zero, weights are reset without resampling.
pub fn normalize_and_resample<R: Rng + ?Sized>(state: &mut SlamState, rng: &mut R) {
    let m = state.particles.len();
    let total = state.weight_sum();
    if !(total > 0.0) || !total.is_finite() {
        for p in &mut state.particles {
            p.weight = 1.0 / m as f64;
        }
        state.diagnostics.degeneracy_resets += 1;
        state.publish();
        return;
    }
    for p in &mut state.particles {
        p.weight /= total;
    }
    state.publish();
    let dist = WeightedIndex::new(state.particles.iter().map(|p| p.weight)).expect("positive total weight");
    let drawn: Vec<Particle> = (0..m).map(|_| state.particles[dist.sample(rng)].clone()).collect();
    state.particles = drawn;
    for p in &mut state.particles {
        p.weight = 1.0 / m as f64;
    }
    state.diagnostics.resamples += 1;
}

fn human_update<R: Rng + ?Sized>(
    state: &mut SlamState,
    partner: &PublishedEstimate,
    z: &Measurement,
    r_var: f64,
    iterative: Option<(f64, usize)>,
    rng: &mut R,
) -> Result<(), SlamError> {
    if !(r_var > 0.0) {
        return Err(SlamError::InvalidObservation(format!("variance {r_var}")));
    }
    if let Measurement::Range(d) = z {
        if !(*d >= 0.0) {
            return Err(SlamError::InvalidObservation(format!("range {d}")));
        }
    }
    let anchor = partner.as_anchor();
    for particle in &mut state.particles {
        let prior = particle.position_cov();
        let res: Result<Proposal, SlamError> = match iterative {
            None => refine_particle_position(&particle.pose, &prior, &anchor, z, r_var, rng),
            Some((beta, max_iters)) => {
                refine_particle_position_iterated(&particle.pose, &prior, &anchor, z, r_var, beta, max_iters, rng)
            }
        };
        match res {
            Ok(prop) => {
                particle.apply_refinement(&prop.sample.position(), &prop.cov, &prop.correction);
                state.diagnostics.regularizations += prop.regularized as u64;
                state.diagnostics.refine_iterations += prop.iterations as u64;
            }
            Err(SlamError::DegenerateGeometry) => state.diagnostics.degenerate_refinements += 1,
            Err(e) => return Err(e),
        }
    }
    state.publish();
    Ok(())
}

/// Refines every particle once against the partner's published estimate.
/// No map entry is touched and weights are unchanged.
pub fn one_shot_human_update<R: Rng + ?Sized>(
    state: &mut SlamState,
    partner: &PublishedEstimate,
    z: &Measurement,
    r_var: f64,
    rng: &mut R,
) -> Result<(), SlamError> {
    human_update(state, partner, z, r_var, None, rng)
}

/// Like [`one_shot_human_update`] but iterates each particle's refinement
/// until successive positions move less than `beta`.
pub fn iterative_human_update<R: Rng + ?Sized>(
    state: &mut SlamState,
    partner: &PublishedEstimate,
    z: &Measurement,
    r_var: f64,
    beta: f64,
    max_iters: usize,
    rng: &mut R,
) -> Result<(), SlamError> {
    if !(beta > 0.0) || max_iters == 0 {
        return Err(SlamError::InvalidObservation(format!(
            "iterative sampling needs beta > 0 and max_iters >= 1 (got {beta}, {max_iters})"
        )));
    }
    human_update(state, partner, z, r_var, Some((beta, max_iters)), rng)
}

/// Motion half of a step: samples a new pose for every particle.
pub fn predict<R: Rng + ?Sized>(state: &mut SlamState, u: &ControlInput, config: &SlamConfig, rng: &mut R) {
    for p in &mut state.particles {
        motion_update(p, u, &config.noise, rng);
    }
    state.publish();
}

fn building_update<R: Rng + ?Sized>(
    state: &mut SlamState,
    z: &Measurement,
    detected: AnchorKind,
    config: &SlamConfig,
    rng: &mut R,
) -> Result<usize, SlamError> {
    let r_var = config.noise.r_var;
    let mut new_anchors = 0;
    for particle in &mut state.particles {
        let assoc = association_likelihoods(particle, z, detected, &config.confusion, config.p0, r_var);
        if !assoc.is_new() {
            let anchor = particle.anchors[assoc.n_hat].clone();
            let prior = particle.position_cov();
            match refine_particle_position(&particle.pose, &prior, &anchor, z, r_var, rng) {
                Ok(prop) => {
                    particle.apply_refinement(&prop.sample.position(), &prop.cov, &prop.correction);
                    state.diagnostics.regularizations += prop.regularized as u64;
                    state.diagnostics.refine_iterations += 1;
                }
                Err(SlamError::DegenerateGeometry) => state.diagnostics.degenerate_refinements += 1,
                Err(e) => return Err(e),
            }
        }
        match map_update(particle, assoc.n_hat, z, r_var, detected)? {
            MapChange::Added => new_anchors += 1,
            MapChange::Updated { regularized } => state.diagnostics.regularizations += regularized as u64,
            MapChange::Skipped => {}
        }
        update_weight(particle, assoc.likelihood());
    }
    normalize_and_resample(state, rng);
    Ok(new_anchors)
}

/// Observation half of a step. Human encounters refine positions only; a
/// building anchor runs association, refinement, map update, reweighting and
/// resampling.
pub fn correct<R: Rng + ?Sized>(
    state: &mut SlamState,
    obs: Option<&Observation>,
    config: &SlamConfig,
    rng: &mut R,
) -> Result<StepOutcome, SlamError> {
    let mut out = StepOutcome::default();
    match obs {
        None => {}
        Some(Observation::Human { partner, z, r_var }) => {
            check_mode(z, config.mode)?;
            match config.sampling {
                SamplingMode::OneShot => one_shot_human_update(state, partner, z, *r_var, rng)?,
                SamplingMode::Iterative { beta, max_iters } => {
                    iterative_human_update(state, partner, z, *r_var, beta, max_iters, rng)?
                }
            }
            out.human_update = true;
        }
        Some(Observation::Building { z, detected }) => {
            check_mode(z, config.mode)?;
            out.new_anchors = building_update(state, z, *detected, config, rng)?;
            out.building_update = true;
            out.resampled = true;
        }
    }
    Ok(out)
}

fn check_mode(z: &Measurement, mode: MeasurementMode) -> Result<(), SlamError> {
    if z.mode() != mode {
        return Err(SlamError::ModeMismatch {
            expected: mode,
            got: z.mode(),
        });
    }
    Ok(())
}

/// One full filter step: motion for every particle, then at most one
/// observation.
pub fn slam_step<R: Rng + ?Sized>(
    state: &mut SlamState,
    u: &ControlInput,
    obs: Option<&Observation>,
    config: &SlamConfig,
    rng: &mut R,
) -> Result<StepOutcome, SlamError> {
    predict(state, u, config, rng);
    correct(state, obs, config, rng)
}

/// Error vector of the published estimate.
pub fn estimate_error(state: &SlamState, truth: &Pose) -> Vector2<f64> {
    state.published.pose.position() - truth.position()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slam::linalg::is_symmetric_psd;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn config(mode: MeasurementMode, sampling: SamplingMode) -> SlamConfig {
        SlamConfig {
            noise: NoiseParams {
                sigma_l: 0.05,
                sigma_phi: 0.02,
                r_var: 0.25,
            },
            mode,
            sampling,
            confusion: ConfusionMatrix::symmetric(3, 0.9).unwrap(),
            p0: 0.1,
        }
    }

    fn tagged(m: usize) -> SlamState {
        let mut s = SlamState::new(0, Pose::new(0.0, 0.0, 0.0), m).unwrap();
        for (i, p) in s.particles.iter_mut().enumerate() {
            p.pose.x = i as f64;
        }
        s
    }

    #[test]
    fn zero_particles_rejected() {
        assert_eq!(
            SlamState::new(0, Pose::new(0.0, 0.0, 0.0), 0).unwrap_err(),
            SlamError::NoParticles
        );
    }

    #[test]
    fn degenerate_weights_copy_the_survivor() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = tagged(2);
        s.particles[0].weight = 1.0;
        s.particles[1].weight = 0.0;
        normalize_and_resample(&mut s, &mut rng);
        assert_eq!(s.len(), 2);
        assert!(s.particles.iter().all(|p| p.pose.x == 0.0));
        assert!(s.particles.iter().all(|p| p.weight == 0.5));
        assert_eq!(s.published.pose.x, 0.0);
    }

    #[test]
    fn published_estimate_taken_before_resampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = tagged(5);
        for (i, p) in s.particles.iter_mut().enumerate() {
            p.weight = if i == 3 { 10.0 } else { 1.0 };
        }
        normalize_and_resample(&mut s, &mut rng);
        assert_eq!(s.published.pose.x, 3.0);
        assert!((s.weight_sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_weights_reset_without_resampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = tagged(4);
        for p in &mut s.particles {
            p.weight = 0.0;
        }
        normalize_and_resample(&mut s, &mut rng);
        let xs: Vec<f64> = s.particles.iter().map(|p| p.pose.x).collect();
        assert_eq!(xs, vec![0.0, 1.0, 2.0, 3.0]);
        assert!(s.particles.iter().all(|p| p.weight == 0.25));
        assert_eq!(s.diagnostics.degeneracy_resets, 1);
        assert_eq!(s.diagnostics.resamples, 0);
    }

    #[test]
    fn uniform_weights_resample_uniformly() {
        // Pearson chi-square over 10 bins, 1e5 draws; 21.666 is the 0.99
        // quantile of chi-square with 9 degrees of freedom.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 10;
        let mut counts = vec![0usize; m];
        for _ in 0..10_000 {
            let mut s = tagged(m);
            normalize_and_resample(&mut s, &mut rng);
            for p in &s.particles {
                counts[p.pose.x as usize] += 1;
            }
        }
        let expected = 100_000.0 / m as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 21.666, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn zero_noise_without_observation_is_dead_reckoning() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut cfg = config(MeasurementMode::Range, SamplingMode::OneShot);
        cfg.noise.sigma_l = 0.0;
        cfg.noise.sigma_phi = 0.0;
        let mut s = SlamState::new(0, Pose::new(1.0, 1.0, 0.0), 3).unwrap();
        for _ in 0..4 {
            slam_step(
                &mut s,
                &ControlInput::new(0.5, std::f64::consts::FRAC_PI_2),
                None,
                &cfg,
                &mut rng,
            )
            .unwrap();
        }
        assert!((s.published.pose.position() - Vector2::new(1.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn human_update_keeps_weights_and_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = config(MeasurementMode::Range, SamplingMode::OneShot);
        let mut s = SlamState::new(0, Pose::new(0.0, 0.0, 0.0), 20).unwrap();
        for _ in 0..10 {
            predict(&mut s, &ControlInput::new(0.7, 0.0), &cfg, &mut rng);
        }
        s.particles[3].weight = 0.3;
        let weights: Vec<f64> = s.particles.iter().map(|p| p.weight).collect();
        let partner = PublishedEstimate {
            pose: Pose::new(10.0, 3.0, 0.0),
            cov: Matrix2::identity() * 0.5,
        };
        let obs = Observation::Human {
            partner,
            z: Measurement::Range(2.0),
            r_var: 1.0,
        };
        let out = correct(&mut s, Some(&obs), &cfg, &mut rng).unwrap();
        assert!(out.human_update && !out.resampled);
        assert_eq!(weights, s.particles.iter().map(|p| p.weight).collect::<Vec<_>>());
        assert!(s.particles.iter().all(|p| p.anchors.is_empty()));
    }

    #[test]
    fn zero_innovation_human_update_preserves_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = 4000;
        let mut s = SlamState::new(0, Pose::new(2.0, 1.0, 0.0), m).unwrap();
        for p in &mut s.particles {
            p.pose_cov = nalgebra::Matrix3::new(0.5, 0.1, 0.0, 0.1, 0.3, 0.0, 0.0, 0.0, 0.01);
        }
        let partner = PublishedEstimate {
            pose: Pose::new(5.0, 5.0, 0.0),
            cov: Matrix2::identity() * 0.2,
        };
        one_shot_human_update(&mut s, &partner, &Measurement::Range(5.0), 1.0, &mut rng).unwrap();
        let mean = s.particles.iter().fold(Vector2::zeros(), |a, p| a + p.pose.position()) / m as f64;
        assert!((mean - Vector2::new(2.0, 1.0)).norm() < 0.04, "{mean}");

        let mut s = SlamState::new(0, Pose::new(2.0, 1.0, 0.0), 8).unwrap();
        for p in &mut s.particles {
            p.pose_cov = nalgebra::Matrix3::identity();
        }
        iterative_human_update(&mut s, &partner, &Measurement::Range(5.0), 1.0, 0.1, 10, &mut rng).unwrap();
        assert_eq!(s.diagnostics.refine_iterations, 8);
    }

    #[test]
    fn equal_errors_leave_expected_error_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let truth_a = Vector2::new(0.0, 0.0);
        let truth_b = Vector2::new(3.0, 0.0);
        let psi = Vector2::new(1.5, -0.5);
        let partner = PublishedEstimate {
            pose: Pose::new(truth_b.x + psi.x, truth_b.y + psi.y, 0.0),
            cov: Matrix2::identity() * 0.5,
        };
        let trials = 20_000;
        let mut s = SlamState::new(0, Pose::new(psi.x, psi.y, 0.0), trials).unwrap();
        for p in &mut s.particles {
            p.pose_cov = nalgebra::Matrix3::identity();
        }
        // each particle sees an independent noisy offset
        let mut acc = Vector2::zeros();
        for p in &mut s.particles {
            let z = truth_b - truth_a
                + Vector2::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                );
            let mut one = SlamState {
                user_id: 0,
                particles: vec![p.clone()],
                published: partner,
                diagnostics: Diagnostics::default(),
            };
            one_shot_human_update(&mut one, &partner, &Measurement::Offset(z), 1.0, &mut rng).unwrap();
            acc += one.particles[0].pose.position() - truth_a;
        }
        let mean = acc / trials as f64;
        assert!((mean - psi).norm() < 0.05, "{mean}");
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = config(MeasurementMode::Offset, SamplingMode::OneShot);
        let mut s = SlamState::new(0, Pose::new(0.0, 0.0, 0.0), 2).unwrap();
        let obs = Observation::Building {
            z: Measurement::Range(1.0),
            detected: AnchorKind(0),
        };
        assert!(matches!(
            slam_step(&mut s, &ControlInput::new(0.7, 0.0), Some(&obs), &cfg, &mut rng),
            Err(SlamError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn building_observation_builds_map_and_resamples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = config(MeasurementMode::Offset, SamplingMode::OneShot);
        let mut s = SlamState::new(0, Pose::new(0.0, 0.0, 0.0), 10).unwrap();
        let obs = Observation::Building {
            z: Measurement::Offset(Vector2::new(0.1, 0.0)),
            detected: AnchorKind(1),
        };
        let out = slam_step(&mut s, &ControlInput::new(0.7, 0.0), Some(&obs), &cfg, &mut rng).unwrap();
        assert!(out.resampled && out.building_update);
        assert_eq!(out.new_anchors, 10);
        assert!(s.particles.iter().all(|p| p.n_anchors() == 1));
        // same spot again: re-associates instead of duplicating
        let out = slam_step(&mut s, &ControlInput::new(0.0, 0.0), Some(&obs), &cfg, &mut rng).unwrap();
        assert_eq!(out.new_anchors, 0);
        assert!(s.particles.iter().all(|p| p.n_anchors() == 1));
    }

    #[test]
    fn steps_are_deterministic_given_seed() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(10);
            let cfg = config(
                MeasurementMode::Range,
                SamplingMode::Iterative {
                    beta: 0.1,
                    max_iters: 10,
                },
            );
            let mut s = SlamState::new(0, Pose::new(0.0, 0.0, 0.0), 15).unwrap();
            for k in 0..60 {
                let obs = match k % 7 {
                    3 => Some(Observation::Building {
                        z: Measurement::Range(0.4),
                        detected: AnchorKind(k % 3),
                    }),
                    5 => Some(Observation::Human {
                        partner: PublishedEstimate {
                            pose: Pose::new(k as f64 * 0.5, 1.0, 0.0),
                            cov: Matrix2::identity(),
                        },
                        z: Measurement::Range(1.5),
                        r_var: 2.0,
                    }),
                    _ => None,
                };
                slam_step(&mut s, &ControlInput::new(0.7, 0.05), obs.as_ref(), &cfg, &mut rng).unwrap();
            }
            s
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn snapshot_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = config(MeasurementMode::Offset, SamplingMode::OneShot);
        let mut s = SlamState::new(4, Pose::new(0.0, 0.0, 0.0), 3).unwrap();
        let obs = Observation::Building {
            z: Measurement::Offset(Vector2::new(0.1, 0.2)),
            detected: AnchorKind(2),
        };
        slam_step(&mut s, &ControlInput::new(0.7, 0.1), Some(&obs), &cfg, &mut rng).unwrap();
        let back = SlamState::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert!(SlamState::from_json("{}").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        #[derive(Debug, Clone)]
        enum Ev {
            Nothing,
            Building(f64, f64, usize),
            Human(f64, f64, f64),
        }

        fn ev() -> impl Strategy<Value = Ev> {
            prop_oneof![
                Just(Ev::Nothing),
                (-1.0f64..1.0, -1.0f64..1.0, 0usize..3).prop_map(|(a, b, k)| Ev::Building(a, b, k)),
                (-20.0f64..20.0, -20.0f64..20.0, 0.0f64..5.0).prop_map(|(a, b, d)| Ev::Human(a, b, d)),
            ]
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn invariants_hold_over_random_runs(
                seed in 0u64..1000,
                m in 1usize..12,
                offset in any::<bool>(),
                events in proptest::collection::vec(ev(), 1..40),
            ) {
                let mode = if offset { MeasurementMode::Offset } else { MeasurementMode::Range };
                let cfg = config(mode, SamplingMode::Iterative { beta: 0.1, max_iters: 5 });
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut s = SlamState::new(1, Pose::new(0.0, 0.0, 0.0), m).unwrap();
                for e in events {
                    let obs = match e {
                        Ev::Nothing => None,
                        Ev::Building(a, b, k) => Some(Observation::Building {
                            z: match mode {
                                MeasurementMode::Offset => Measurement::Offset(Vector2::new(a, b)),
                                MeasurementMode::Range => Measurement::Range(a.abs() + b.abs()),
                            },
                            detected: AnchorKind(k),
                        }),
                        Ev::Human(a, b, d) => Some(Observation::Human {
                            partner: PublishedEstimate { pose: Pose::new(a, b, 0.0), cov: Matrix2::identity() * d },
                            z: match mode {
                                MeasurementMode::Offset => Measurement::Offset(Vector2::new(d, -d)),
                                MeasurementMode::Range => Measurement::Range(d),
                            },
                            r_var: 0.5 + d,
                        }),
                    };
                    if let Some(Observation::Building { z, detected }) = &obs {
                        for p in &s.particles {
                            let r = association_likelihoods(p, z, *detected, &cfg.confusion, cfg.p0, cfg.noise.r_var);
                            let total: f64 = r.probabilities.iter().sum();
                            prop_assert!((total - 1.0).abs() < 1e-9);
                            prop_assert!(r.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
                        }
                    }
                    let out = slam_step(&mut s, &ControlInput::new(0.7, 0.1), obs.as_ref(), &cfg, &mut rng).unwrap();
                    prop_assert_eq!(s.len(), m);
                    if out.resampled {
                        prop_assert!((s.weight_sum() - 1.0).abs() < 1e-9);
                    }
                    for p in &s.particles {
                        prop_assert_eq!(p.n_anchors(), p.anchors.len());
                        prop_assert!(p.weight >= 0.0);
                        prop_assert!(is_symmetric_psd(&p.pose_cov, 1e-9));
                        prop_assert!(p.pose.phi > -std::f64::consts::PI && p.pose.phi <= std::f64::consts::PI);
                        for a in &p.anchors {
                            prop_assert!(is_symmetric_psd(&a.sigma, 1e-9));
                        }
                    }
                    prop_assert!(is_symmetric_psd(&s.published.cov, 1e-9));
                }
            }
        }
    }
}
