use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Planar pose: position in meters, heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, phi: f64) -> Self {
        Self {
            x,
            y,
            phi: wrap_angle(phi),
        }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn set_position(&mut self, p: &Vector2<f64>) {
        self.x = p.x;
        self.y = p.y;
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.position() - other.position()).norm()
    }
}

/// One dead-reckoning step: displacement and heading change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub l_hat: f64,
    pub phi_hat: f64,
}

impl ControlInput {
    pub fn new(l_hat: f64, phi_hat: f64) -> Self {
        debug_assert!(l_hat >= 0.0, "step length must be non-negative");
        Self { l_hat, phi_hat }
    }
}
