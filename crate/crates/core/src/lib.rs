//! Collaborative indoor SLAM where other pedestrians act as mobile anchors.
//!
//! * [`encounter`] turns Bluetooth and WiFi readings into encounter events
//!   and relative distances.
//! * [`slam`] is the per-user particle filter.
//! * [`sim`] generates a multi-agent ground truth to run the filter against.
//! * [`harness`] runs experiments, sweeps and convergence studies.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod encounter;
pub mod harness;
pub mod sim;
pub mod slam;
