//! Global-frame leader estimation: CV Kalman filter, unicycle EKF and a
//! GPB1 bank fusing them.

mod cv;
mod filter;
mod gpb1;
mod model;
mod unicycle;

pub use cv::{cv_noise_gain, cv_predict, cv_process_noise, cv_transition, cv_update, CvState};
pub use gpb1::{gpb1_step, Gpb1, MmEstimate};
pub use model::{ConstantVelocity, Kinematic, ModelFactory, ModelRegistry, ModelState, MotionModel, Unicycle};
pub use unicycle::{uni_jacobian, uni_noise_gain, uni_predict, uni_process_noise, uni_transition, uni_update, UniState};

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Pose2D};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrackerError {
    #[error("numerical fault: {0}")]
    NumericalFault(&'static str),
    #[error("unknown motion model `{0}`")]
    UnknownModel(String),
    #[error("model bank is empty")]
    EmptyBank,
    #[error("transition stay probability must lie in [0, 1], got {0}")]
    BadTransition(f64),
}

/// Leader position observed in the world frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub z: Point,
    pub r: Matrix2<f64>,
    pub timestamp: f64,
}

impl Measurement {
    /// Isotropic noise `σ² I`.
    pub fn new(z: Point, sigma: f64, timestamp: f64) -> Self {
        Self {
            z,
            r: Matrix2::identity() * sigma * sigma,
            timestamp,
        }
    }
}

pub fn local_to_world(local: &Point, robot_pose: &Pose2D) -> Point {
    robot_pose.as_transform().apply(local)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultStatus {
    Ok,
    Fault,
}

/// Largest eigenvalue of a symmetric 2×2 matrix.
fn max_eigenvalue_2(m: &Matrix2<f64>) -> f64 {
    let (a, b, d) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
    let mean = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    mean + half_diff.hypot(b)
}

pub fn check_fault(est: &MmEstimate, limit: f64) -> FaultStatus {
    assert!(limit > 0.0);
    let lmax = max_eigenvalue_2(&est.fused_cov_pos);
    if !lmax.is_finite() || lmax.max(0.0).sqrt() > limit {
        FaultStatus::Fault
    } else {
        FaultStatus::Ok
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Registry names, in bank order.
    pub models: Vec<String>,
    /// Diagonal of the model transition matrix; the remainder is spread
    /// evenly over the other models.
    pub p_stay: f64,
    pub cv_accel_sigma: f64,
    pub uni_accel_sigma: f64,
    pub uni_yaw_accel_sigma: f64,
    pub measurement_sigma: f64,
    pub initial_velocity_sigma: f64,
    pub fault_limit: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            models: vec!["cv".into(), "unicycle".into()],
            p_stay: 0.95,
            cv_accel_sigma: 0.8,
            uni_accel_sigma: 0.8,
            uni_yaw_accel_sigma: 1.0,
            measurement_sigma: 0.05,
            initial_velocity_sigma: 1.0,
            fault_limit: 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn local_to_world_examples() {
        let p = Point::new(2.0, -1.0);
        assert_eq!(local_to_world(&p, &Pose2D::identity()), p);
        let q = local_to_world(&Point::new(2.0, 0.0), &Pose2D::new(1.0, 1.0, 0.0));
        assert!((q - Point::new(3.0, 1.0)).norm() < 1e-15);
        let r = local_to_world(&Point::new(1.0, 0.0), &Pose2D::new(0.0, 0.0, FRAC_PI_2));
        assert!((r - Point::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn closed_form_eigenvalue_matches_solver() {
        let m = Matrix2::new(0.3, 0.1, 0.1, 0.05);
        let want = m.symmetric_eigen().eigenvalues.max();
        assert!((max_eigenvalue_2(&m) - want).abs() < 1e-15);
    }
}
