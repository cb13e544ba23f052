use nalgebra::Vector2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Environment;
use crate::slam::{wrap_angle, ControlInput, Pose};

/// Ground truth for one walker.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTruth {
    pub id: usize,
    /// Pose after every step, starting with the initial pose.
    pub trace: Vec<Pose>,
    /// Meters per step.
    pub speed: f64,
    pub waypoint: Vector2<f64>,
}

impl AgentTruth {
    pub fn new(id: usize, start: Pose, speed: f64, waypoint: Vector2<f64>) -> Self {
        Self {
            id,
            trace: vec![start],
            speed,
            waypoint,
        }
    }

    pub fn pose(&self) -> Pose {
        *self.trace.last().expect("trace starts non-empty")
    }
}

/// True and observed control for one agent-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControls {
    pub truth: ControlInput,
    pub observed: ControlInput,
}

pub fn random_waypoint<R: Rng + ?Sized>(env: &Environment, rng: &mut R) -> Vector2<f64> {
    Vector2::new(rng.random_range(0.0..=env.width), rng.random_range(0.0..=env.height))
}

fn step_target(p: &Vector2<f64>, heading: f64, l: f64) -> Vector2<f64> {
    p + Vector2::new(heading.cos(), heading.sin()) * l
}

/// Heading after specular reflection off whichever walls the step would
/// cross. Falls back to reversing in a corner the reflection cannot clear.
pub fn reflect_heading(env: &Environment, p: &Vector2<f64>, heading: f64, l: f64) -> f64 {
    let mut h = heading;
    let next = step_target(p, h, l);
    if next.x < 0.0 || next.x > env.width {
        h = std::f64::consts::PI - h;
    }
    if next.y < 0.0 || next.y > env.height {
        h = -h;
    }
    h = wrap_angle(h);
    if !env.contains(&step_target(p, h, l)) {
        h = wrap_angle(heading + std::f64::consts::PI);
    }
    h
}

/// Moves one agent a single step toward its waypoint, drawing a new waypoint
/// on arrival. Returns the exact control that reproduces the move under the
/// filter's motion model.
pub fn advance_agent<R: Rng + ?Sized>(env: &Environment, agent: &mut AgentTruth, rng: &mut R) -> ControlInput {
    let pose = agent.pose();
    let p = pose.position();
    while (agent.waypoint - p).norm() < agent.speed {
        agent.waypoint = random_waypoint(env, rng);
    }
    let d = agent.waypoint - p;
    let mut heading = d.y.atan2(d.x);
    if !env.contains(&step_target(&p, heading, agent.speed)) {
        heading = reflect_heading(env, &p, heading, agent.speed);
    }
    let phi = wrap_angle(heading - pose.phi);
    let new_heading = wrap_angle(pose.phi + phi);
    let mut next = step_target(&p, new_heading, agent.speed);
    // guard against rounding at the boundary
    next.x = next.x.clamp(0.0, env.width);
    next.y = next.y.clamp(0.0, env.height);
    agent.trace.push(Pose::new(next.x, next.y, new_heading));
    ControlInput::new(agent.speed, phi)
}

/// Adds dead-reckoning noise to a true control.
pub fn observe_control<R: Rng + ?Sized>(
    truth: &ControlInput,
    sigma_l: f64,
    sigma_phi: f64,
    rng: &mut R,
) -> ControlInput {
    let dl = Normal::new(0.0, sigma_l).expect("sigma_l >= 0").sample(rng);
    let dphi = Normal::new(0.0, sigma_phi).expect("sigma_phi >= 0").sample(rng);
    ControlInput::new(truth.l_hat + dl, truth.phi_hat + dphi)
}

/// Advances every agent one step. `trajectory_rngs[i]` drives agent `i`'s
/// waypoints and `noise_rngs[i]` its sensor noise.
pub fn advance_agents<R: Rng>(
    env: &Environment,
    agents: &mut [AgentTruth],
    sigma_l: f64,
    sigma_phi: f64,
    trajectory_rngs: &mut [R],
    noise_rngs: &mut [R],
) -> Vec<StepControls> {
    agents
        .iter_mut()
        .zip(trajectory_rngs.iter_mut().zip(noise_rngs.iter_mut()))
        .map(|(agent, (tr, nr))| {
            let truth = advance_agent(env, agent, tr);
            StepControls {
                truth,
                observed: observe_control(&truth, sigma_l, sigma_phi, nr),
            }
        })
        .collect()
}
