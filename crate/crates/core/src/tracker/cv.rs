//! Constant-velocity linear Kalman filter over `[x, y, v_x, v_y]`.

use nalgebra::{Matrix2, Matrix4, Matrix4x2, Vector4};

use super::filter::{position_update, symmetrize};
use super::{Measurement, TrackerError};

#[derive(Clone, Debug, PartialEq)]
pub struct CvState {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

pub fn cv_transition(dt: f64) -> Matrix4<f64> {
    let mut a = Matrix4::identity();
    a[(0, 2)] = dt;
    a[(1, 3)] = dt;
    a
}

/// Maps the acceleration noise into the state.
pub fn cv_noise_gain(dt: f64) -> Matrix4x2<f64> {
    let h = 0.5 * dt * dt;
    Matrix4x2::new(h, 0.0, 0.0, h, dt, 0.0, 0.0, dt)
}

/// Acceleration covariance `Q = σ_a² I`.
pub fn cv_process_noise(accel_sigma: f64) -> Matrix2<f64> {
    Matrix2::identity() * accel_sigma * accel_sigma
}

pub fn cv_predict(s: &CvState, dt: f64, q: &Matrix2<f64>) -> CvState {
    debug_assert!(dt > 0.0);
    let a = cv_transition(dt);
    let b = cv_noise_gain(dt);
    CvState {
        mean: a * s.mean,
        cov: symmetrize(&(a * s.cov * a.transpose() + b * q * b.transpose())),
    }
}

pub fn cv_update(s: &CvState, z: &Measurement) -> Result<(CvState, f64), TrackerError> {
    let (mean, cov, likelihood) = position_update(&s.mean, &s.cov, z)?;
    Ok((CvState { mean, cov }, likelihood))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn prior() -> CvState {
        CvState {
            mean: Vector4::new(1.0, 2.0, 0.0, 0.0),
            cov: Matrix4::from_diagonal(&Vector4::new(0.01, 0.01, 0.1, 0.1)),
        }
    }

    #[test]
    fn stationary_predict_grows_position_variance_by_bqbt() {
        let q = cv_process_noise(0.8);
        let s = CvState {
            cov: Matrix4::zeros(),
            ..prior()
        };
        let p = cv_predict(&s, 0.05, &q);
        assert_eq!(p.mean, s.mean);
        let b = cv_noise_gain(0.05);
        let bqb = b * q * b.transpose();
        assert!((p.cov - bqb).norm() < 1e-18);
        assert!(p.cov[(0, 0)] > 0.0);
    }

    #[test]
    fn zero_innovation_keeps_mean_and_shrinks_trace() {
        let s = prior();
        let z = Measurement::new(Point::new(1.0, 2.0), 0.05, 0.0);
        let (u, lik) = cv_update(&s, &z).unwrap();
        assert_eq!(u.mean, s.mean);
        assert!(u.cov.trace() < s.cov.trace());
        assert!(lik > 0.0);
    }

    #[test]
    fn constant_velocity_estimate_within_three_sigma() {
        let dt = 0.05;
        let sigma = 0.05;
        let truth_v = (1.0, 0.5);
        let q = cv_process_noise(0.8);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut s = CvState {
            mean: Vector4::new(0.0, 0.0, 0.0, 0.0),
            cov: Matrix4::from_diagonal(&Vector4::new(sigma * sigma, sigma * sigma, 1.0, 1.0)),
        };
        for k in 1..=200 {
            let t = k as f64 * dt;
            s = cv_predict(&s, dt, &q);
            let z = Measurement::new(
                Point::new(truth_v.0 * t + noise.sample(&mut rng), truth_v.1 * t + noise.sample(&mut rng)),
                sigma,
                t,
            );
            s = cv_update(&s, &z).unwrap().0;
        }
        assert!((s.mean[2] - truth_v.0).abs() <= 3.0 * s.cov[(2, 2)].sqrt());
        assert!((s.mean[3] - truth_v.1).abs() <= 3.0 * s.cov[(3, 3)].sqrt());
    }
}
