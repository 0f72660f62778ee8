//! Unicycle EKF over `[x, y, θ, v, ω]`.

use nalgebra::{Matrix2, Matrix5, Matrix5x2, Vector5};

use super::filter::{position_update, symmetrize};
use super::{Measurement, TrackerError};
use crate::geometry::normalize_angle;

#[derive(Clone, Debug, PartialEq)]
pub struct UniState {
    pub mean: Vector5<f64>,
    pub cov: Matrix5<f64>,
}

pub fn uni_transition(h: &Vector5<f64>, dt: f64) -> Vector5<f64> {
    let (s, c) = h[2].sin_cos();
    Vector5::new(h[0] + dt * h[3] * c, h[1] + dt * h[3] * s, h[2] + dt * h[4], h[3], h[4])
}

/// Analytic Jacobian of [`uni_transition`] with respect to the state:
///
/// ```text
/// ⎡1 0 -dt·v·sinθ  dt·cosθ  0 ⎤
/// ⎢0 1  dt·v·cosθ  dt·sinθ  0 ⎥
/// ⎢0 0  1          0        dt⎥
/// ⎢0 0  0          1        0 ⎥
/// ⎣0 0  0          0        1 ⎦
/// ```
pub fn uni_jacobian(h: &Vector5<f64>, dt: f64) -> Matrix5<f64> {
    let (s, c) = h[2].sin_cos();
    let v = h[3];
    let mut f = Matrix5::identity();
    f[(0, 2)] = -dt * v * s;
    f[(0, 3)] = dt * c;
    f[(1, 2)] = dt * v * c;
    f[(1, 3)] = dt * s;
    f[(2, 4)] = dt;
    f
}

pub fn uni_noise_gain(dt: f64) -> Matrix5x2<f64> {
    let mut b = Matrix5x2::zeros();
    b[(3, 0)] = dt;
    b[(4, 1)] = dt;
    b
}

/// `E = diag(σ_a², σ_α²)` for linear and angular acceleration.
pub fn uni_process_noise(accel_sigma: f64, yaw_accel_sigma: f64) -> Matrix2<f64> {
    Matrix2::new(accel_sigma * accel_sigma, 0.0, 0.0, yaw_accel_sigma * yaw_accel_sigma)
}

pub fn uni_predict(s: &UniState, dt: f64, e: &Matrix2<f64>) -> UniState {
    debug_assert!(dt > 0.0);
    let f = uni_jacobian(&s.mean, dt);
    let b = uni_noise_gain(dt);
    let mut mean = uni_transition(&s.mean, dt);
    mean[2] = normalize_angle(mean[2]);
    UniState {
        mean,
        cov: symmetrize(&(f * s.cov * f.transpose() + b * e * b.transpose())),
    }
}

pub fn uni_update(s: &UniState, z: &Measurement) -> Result<(UniState, f64), TrackerError> {
    let (mut mean, cov, likelihood) = position_update(&s.mean, &s.cov, z)?;
    mean[2] = normalize_angle(mean[2]);
    Ok((UniState { mean, cov }, likelihood))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn still_target_is_a_fixed_point() {
        let s = UniState {
            mean: Vector5::new(1.0, -2.0, 0.7, 0.0, 0.0),
            cov: Matrix5::identity() * 0.1,
        };
        let p = uni_predict(&s, 0.05, &uni_process_noise(0.8, 1.0));
        assert_eq!(p.mean, s.mean);
    }

    #[test]
    fn straight_motion_advances_x() {
        let s = UniState {
            mean: Vector5::new(0.0, 0.0, 0.0, 1.0, 0.0),
            cov: Matrix5::identity(),
        };
        let p = uni_predict(&s, 0.1, &uni_process_noise(0.8, 1.0));
        assert!((p.mean[0] - 0.1).abs() < 1e-15);
        assert_eq!(p.mean[1], 0.0);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dt = 0.05;
        let h = 1e-6;
        for _ in 0..100 {
            let x = Vector5::new(
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-3.1..3.1),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let jac = uni_jacobian(&x, dt);
            for j in 0..5 {
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                let col = (uni_transition(&xp, dt) - uni_transition(&xm, dt)) / (2.0 * h);
                for i in 0..5 {
                    let err = (col[i] - jac[(i, j)]).abs() / jac[(i, j)].abs().max(1.0);
                    assert!(err <= 1e-6, "({i},{j}) fd {} analytic {}", col[i], jac[(i, j)]);
                }
            }
        }
    }
}
