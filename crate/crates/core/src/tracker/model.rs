//! Motion models behind a common trait, registered by name.
//!
//! Every model exchanges estimates with the bank through the shared
//! kinematic state `[x, y, v_x, v_y]`. Mapping into and out of that space is
//! each model's business.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Matrix4x5, Matrix5, Vector4, Vector5};

use crate::geometry::normalize_angle;

use super::cv::{cv_predict, cv_process_noise, cv_update, CvState};
use super::unicycle::{uni_predict, uni_process_noise, uni_update, UniState};
use super::{Measurement, TrackerConfig, TrackerError};

/// Gaussian over the shared kinematic state `[x, y, v_x, v_y]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kinematic {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

/// A model's own state, stored dynamically so heterogeneous models share a
/// bank.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

pub trait MotionModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Initial state from a kinematic Gaussian.
    fn init(&self, fused: &Kinematic) -> ModelState;

    /// Re-base on the bank's fused estimate. `previous` supplies components
    /// the kinematic state does not carry.
    fn rebase(&self, fused: &Kinematic, previous: &ModelState) -> ModelState;

    fn predict(&self, state: &ModelState, dt: f64) -> ModelState;

    fn update(&self, state: &ModelState, z: &Measurement) -> Result<(ModelState, f64), TrackerError>;

    fn to_kinematic(&self, state: &ModelState) -> Kinematic;
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstantVelocity {
    pub q: Matrix2<f64>,
}

impl ConstantVelocity {
    pub fn new(accel_sigma: f64) -> Self {
        Self {
            q: cv_process_noise(accel_sigma),
        }
    }

    fn typed(state: &ModelState) -> CvState {
        CvState {
            mean: Vector4::from_column_slice(state.mean.as_slice()),
            cov: Matrix4::from_column_slice(state.cov.as_slice()),
        }
    }

    fn dynamic(state: &CvState) -> ModelState {
        ModelState {
            mean: DVector::from_column_slice(state.mean.as_slice()),
            cov: DMatrix::from_column_slice(4, 4, state.cov.as_slice()),
        }
    }
}

impl MotionModel for ConstantVelocity {
    fn name(&self) -> &'static str {
        "cv"
    }

    fn init(&self, fused: &Kinematic) -> ModelState {
        Self::dynamic(&CvState {
            mean: fused.mean,
            cov: fused.cov,
        })
    }

    fn rebase(&self, fused: &Kinematic, _previous: &ModelState) -> ModelState {
        self.init(fused)
    }

    fn predict(&self, state: &ModelState, dt: f64) -> ModelState {
        Self::dynamic(&cv_predict(&Self::typed(state), dt, &self.q))
    }

    fn update(&self, state: &ModelState, z: &Measurement) -> Result<(ModelState, f64), TrackerError> {
        let (s, l) = cv_update(&Self::typed(state), z)?;
        Ok((Self::dynamic(&s), l))
    }

    fn to_kinematic(&self, state: &ModelState) -> Kinematic {
        let s = Self::typed(state);
        Kinematic { mean: s.mean, cov: s.cov }
    }
}

/// Unicycle EKF. Mapping convention from the kinematic state: heading is the
/// direction of the fused velocity and speed its norm; below `min_speed` the
/// heading is undefined, so the model keeps its previous heading and speed
/// becomes the velocity projected on it. Turn rate is never observable from
/// the kinematic state and always carries over.
#[derive(Clone, Debug, PartialEq)]
pub struct Unicycle {
    pub e: Matrix2<f64>,
    pub min_speed: f64,
    pub initial_yaw_rate_sigma: f64,
}

impl Unicycle {
    pub fn new(accel_sigma: f64, yaw_accel_sigma: f64) -> Self {
        Self {
            e: uni_process_noise(accel_sigma, yaw_accel_sigma),
            min_speed: 0.05,
            initial_yaw_rate_sigma: 1.0,
        }
    }

    fn typed(state: &ModelState) -> UniState {
        UniState {
            mean: Vector5::from_column_slice(state.mean.as_slice()),
            cov: Matrix5::from_column_slice(state.cov.as_slice()),
        }
    }

    fn dynamic(state: &UniState) -> ModelState {
        ModelState {
            mean: DVector::from_column_slice(state.mean.as_slice()),
            cov: DMatrix::from_column_slice(5, 5, state.cov.as_slice()),
        }
    }

    /// Marginal over `[x, y, θ, v]` implied by a kinematic Gaussian.
    fn core_from_kinematic(&self, fused: &Kinematic, heading: (f64, f64)) -> (Vector4<f64>, Matrix4<f64>) {
        let (x, y, vx, vy) = (fused.mean[0], fused.mean[1], fused.mean[2], fused.mean[3]);
        let speed = vx.hypot(vy);
        let mut j = Matrix4::zeros();
        j[(0, 0)] = 1.0;
        j[(1, 1)] = 1.0;
        let (theta, v, theta_var) = if speed > self.min_speed {
            let v2 = speed * speed;
            j[(2, 2)] = -vy / v2;
            j[(2, 3)] = vx / v2;
            j[(3, 2)] = vx / speed;
            j[(3, 3)] = vy / speed;
            (vy.atan2(vx), speed, 0.0)
        } else {
            let (s, c) = heading.0.sin_cos();
            j[(3, 2)] = c;
            j[(3, 3)] = s;
            (heading.0, vx * c + vy * s, heading.1)
        };
        let mut cov = j * fused.cov * j.transpose();
        cov[(2, 2)] += theta_var;
        (Vector4::new(x, y, theta, v), cov)
    }

    fn assemble(core: (Vector4<f64>, Matrix4<f64>), omega: f64, omega_cross: Vector4<f64>, omega_var: f64) -> UniState {
        let (m, p) = core;
        let mut cov = Matrix5::zeros();
        cov.fixed_view_mut::<4, 4>(0, 0).copy_from(&p);
        for i in 0..4 {
            cov[(i, 4)] = omega_cross[i];
            cov[(4, i)] = omega_cross[i];
        }
        cov[(4, 4)] = omega_var;
        UniState {
            mean: Vector5::new(m[0], m[1], m[2], m[3], omega),
            cov,
        }
    }
}

impl MotionModel for Unicycle {
    fn name(&self) -> &'static str {
        "unicycle"
    }

    fn init(&self, fused: &Kinematic) -> ModelState {
        let core = self.core_from_kinematic(fused, (0.0, std::f64::consts::PI.powi(2)));
        let var = self.initial_yaw_rate_sigma.powi(2);
        Self::dynamic(&Self::assemble(core, 0.0, Vector4::zeros(), var))
    }

    /// The fused estimate replaces the `[x, y, θ, v]` marginal while the
    /// conditional law of ω given that marginal is kept from `previous`,
    /// i.e. `ω | c ~ N(ω̄ + G (c − c̄), r)` with `G = P_ωc P_cc⁻¹`.
    fn rebase(&self, fused: &Kinematic, previous: &ModelState) -> ModelState {
        let prev = Self::typed(previous);
        let core = self.core_from_kinematic(fused, (prev.mean[2], prev.cov[(2, 2)]));
        let p_cc = prev.cov.fixed_view::<4, 4>(0, 0).into_owned();
        let p_wc = prev.cov.fixed_view::<1, 4>(4, 0).into_owned();
        let var = prev.cov[(4, 4)];
        let Some(chol) = p_cc.cholesky() else {
            return Self::dynamic(&Self::assemble(core, prev.mean[4], Vector4::zeros(), var));
        };
        let g = chol.solve(&p_wc.transpose()).transpose();
        let residual = (var - (g * p_wc.transpose())[(0, 0)]).max(0.0);
        let mut shift = core.0 - prev.mean.fixed_rows::<4>(0).into_owned();
        shift[2] = normalize_angle(shift[2]);
        let omega = prev.mean[4] + (g * shift)[(0, 0)];
        let cross = core.1 * g.transpose();
        let omega_var = (g * core.1 * g.transpose())[(0, 0)] + residual;
        Self::dynamic(&Self::assemble(core, omega, cross, omega_var))
    }

    fn predict(&self, state: &ModelState, dt: f64) -> ModelState {
        Self::dynamic(&uni_predict(&Self::typed(state), dt, &self.e))
    }

    fn update(&self, state: &ModelState, z: &Measurement) -> Result<(ModelState, f64), TrackerError> {
        let (s, l) = uni_update(&Self::typed(state), z)?;
        Ok((Self::dynamic(&s), l))
    }

    fn to_kinematic(&self, state: &ModelState) -> Kinematic {
        let s = Self::typed(state);
        let (sin, cos) = s.mean[2].sin_cos();
        let v = s.mean[3];
        let mut j = Matrix4x5::zeros();
        j[(0, 0)] = 1.0;
        j[(1, 1)] = 1.0;
        j[(2, 2)] = -v * sin;
        j[(2, 3)] = cos;
        j[(3, 2)] = v * cos;
        j[(3, 3)] = sin;
        Kinematic {
            mean: Vector4::new(s.mean[0], s.mean[1], v * cos, v * sin),
            cov: j * s.cov * j.transpose(),
        }
    }
}

pub type ModelFactory = fn(&TrackerConfig) -> Box<dyn MotionModel>;

/// Name → constructor table for the models a bank may be assembled from.
#[derive(Clone)]
pub struct ModelRegistry {
    factories: BTreeMap<String, ModelFactory>,
}

impl fmt::Debug for ModelRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// `cv` and `unicycle`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("cv", |cfg| Box::new(ConstantVelocity::new(cfg.cv_accel_sigma)));
        r.register("unicycle", |cfg| {
            Box::new(Unicycle::new(cfg.uni_accel_sigma, cfg.uni_yaw_accel_sigma))
        });
        r
    }

    pub fn register(&mut self, name: &str, factory: ModelFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, cfg: &TrackerConfig) -> Result<Box<dyn MotionModel>, TrackerError> {
        self.factories
            .get(name)
            .map(|f| f(cfg))
            .ok_or_else(|| TrackerError::UnknownModel(name.to_string()))
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_builds_by_name() {
        let r = ModelRegistry::builtin();
        let cfg = TrackerConfig::default();
        assert_eq!(r.build("cv", &cfg).unwrap().name(), "cv");
        assert_eq!(r.build("unicycle", &cfg).unwrap().name(), "unicycle");
        assert!(matches!(r.build("ctrv", &cfg), Err(TrackerError::UnknownModel(_))));
        assert_eq!(r.names().collect::<Vec<_>>(), vec!["cv", "unicycle"]);
    }

    #[test]
    fn unicycle_round_trips_a_moving_state() {
        let m = Unicycle::new(0.8, 1.0);
        let k = Kinematic {
            mean: Vector4::new(1.0, 2.0, 0.6, 0.8),
            cov: Matrix4::identity() * 0.01,
        };
        let s = m.init(&k);
        assert!((s.mean[2] - 0.8f64.atan2(0.6)).abs() < 1e-15);
        assert!((s.mean[3] - 1.0).abs() < 1e-15);
        let back = m.to_kinematic(&s);
        assert!((back.mean - k.mean).norm() < 1e-12);
    }

    #[test]
    fn slow_target_keeps_previous_heading() {
        let m = Unicycle::new(0.8, 1.0);
        let prev = m.init(&Kinematic {
            mean: Vector4::new(0.0, 0.0, 0.0, 1.0),
            cov: Matrix4::identity() * 0.01,
        });
        let slow = Kinematic {
            mean: Vector4::new(0.0, 0.0, 0.001, 0.0),
            cov: Matrix4::identity() * 0.01,
        };
        let s = m.rebase(&slow, &prev);
        assert!((s.mean[2] - prev.mean[2]).abs() < 1e-15);
        assert!(s.cov.iter().all(|v| v.is_finite()));
    }
}
