//! First-order generalised pseudo-Bayesian bank.
//!
//! Every step each model is re-based on the previous fused estimate,
//! predicted, and corrected when a measurement is present. Model
//! probabilities are propagated through the Markov transition matrix and
//! reweighted by the measurement likelihoods.

use nalgebra::{DMatrix, Matrix2, Matrix4, Vector4};

use super::model::{Kinematic, ModelRegistry, ModelState, MotionModel};
use super::{CvState, Measurement, TrackerConfig, TrackerError, UniState};
use crate::geometry::Point;

#[derive(Debug)]
pub struct Gpb1 {
    models: Vec<Box<dyn MotionModel>>,
    transition: DMatrix<f64>,
    initial_velocity_sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MmEstimate {
    pub timestamp: f64,
    pub names: Vec<&'static str>,
    pub models: Vec<ModelState>,
    pub mu: Vec<f64>,
    pub fused: Kinematic,
    pub fused_position: Point,
    pub fused_cov_pos: Matrix2<f64>,
    /// Set when every likelihood vanished and `mu` fell back to the
    /// transition prior.
    pub likelihood_fallback: bool,
}

impl MmEstimate {
    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| *n == name)
    }

    pub fn mu_of(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.mu[i])
    }

    pub fn cv(&self) -> Option<CvState> {
        let s = &self.models[self.index("cv")?];
        Some(CvState {
            mean: Vector4::from_column_slice(s.mean.as_slice()),
            cov: Matrix4::from_column_slice(s.cov.as_slice()),
        })
    }

    pub fn uni(&self) -> Option<UniState> {
        let s = &self.models[self.index("unicycle")?];
        Some(UniState {
            mean: nalgebra::Vector5::from_column_slice(s.mean.as_slice()),
            cov: nalgebra::Matrix5::from_column_slice(s.cov.as_slice()),
        })
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.fused.mean[2], self.fused.mean[3])
    }
}

impl Gpb1 {
    pub fn from_config(cfg: &TrackerConfig) -> Result<Self, TrackerError> {
        Self::from_registry(&ModelRegistry::builtin(), cfg)
    }

    pub fn from_registry(registry: &ModelRegistry, cfg: &TrackerConfig) -> Result<Self, TrackerError> {
        let models = cfg
            .models
            .iter()
            .map(|n| registry.build(n, cfg))
            .collect::<Result<Vec<_>, _>>()?;
        Self::with_models(models, cfg.p_stay, cfg.initial_velocity_sigma)
    }

    pub fn with_models(
        models: Vec<Box<dyn MotionModel>>,
        p_stay: f64,
        initial_velocity_sigma: f64,
    ) -> Result<Self, TrackerError> {
        let n = models.len();
        if n == 0 {
            return Err(TrackerError::EmptyBank);
        }
        if !(0.0..=1.0).contains(&p_stay) {
            return Err(TrackerError::BadTransition(p_stay));
        }
        let transition = if n == 1 {
            DMatrix::from_element(1, 1, 1.0)
        } else {
            let off = (1.0 - p_stay) / (n - 1) as f64;
            DMatrix::from_fn(n, n, |i, j| if i == j { p_stay } else { off })
        };
        Ok(Self {
            models,
            transition,
            initial_velocity_sigma,
        })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    /// Start from a first fix with zero-mean, broad velocity and uniform
    /// model probabilities.
    pub fn init(&self, z: &Measurement) -> MmEstimate {
        let sv = self.initial_velocity_sigma * self.initial_velocity_sigma;
        let mut cov = Matrix4::zeros();
        cov.fixed_view_mut::<2, 2>(0, 0).copy_from(&z.r);
        cov[(2, 2)] = sv;
        cov[(3, 3)] = sv;
        let fused = Kinematic {
            mean: Vector4::new(z.z.x, z.z.y, 0.0, 0.0),
            cov,
        };
        self.init_from(fused, z.timestamp)
    }

    pub fn init_from(&self, fused: Kinematic, timestamp: f64) -> MmEstimate {
        let n = self.models.len();
        let models = self.models.iter().map(|m| m.init(&fused)).collect();
        MmEstimate {
            timestamp,
            names: self.models.iter().map(|m| m.name()).collect(),
            models,
            mu: vec![1.0 / n as f64; n],
            fused_position: Point::new(fused.mean[0], fused.mean[1]),
            fused_cov_pos: fused.cov.fixed_view::<2, 2>(0, 0).into_owned(),
            fused,
            likelihood_fallback: false,
        }
    }

    pub fn step(&self, est: &MmEstimate, z: Option<&Measurement>, dt: f64) -> Result<MmEstimate, TrackerError> {
        let n = self.models.len();
        assert_eq!(est.models.len(), n, "estimate does not belong to this bank");
        let prior: Vec<f64> = (0..n)
            .map(|j| (0..n).map(|i| self.transition[(i, j)] * est.mu[i]).sum())
            .collect();

        let mut states = Vec::with_capacity(n);
        let mut likelihoods = Vec::with_capacity(n);
        for (m, prev) in self.models.iter().zip(&est.models) {
            let s = m.predict(&m.rebase(&est.fused, prev), dt);
            match z {
                Some(z) => {
                    let (s, l) = m.update(&s, z)?;
                    states.push(s);
                    likelihoods.push(l);
                }
                None => states.push(s),
            }
        }

        let mut fallback = false;
        let mu = if z.is_some() {
            let w: Vec<f64> = prior.iter().zip(&likelihoods).map(|(p, l)| p * l).collect();
            let total: f64 = w.iter().sum();
            if total > 0.0 && total.is_finite() {
                w.iter().map(|x| x / total).collect()
            } else {
                fallback = true;
                prior
            }
        } else {
            prior
        };

        let kin: Vec<Kinematic> = self.models.iter().zip(&states).map(|(m, s)| m.to_kinematic(s)).collect();
        let mean: Vector4<f64> = kin.iter().zip(&mu).map(|(k, w)| k.mean * *w).sum();
        let mut cov = Matrix4::zeros();
        for (k, w) in kin.iter().zip(&mu) {
            let d = k.mean - mean;
            cov += (k.cov + d * d.transpose()) * *w;
        }
        let cov = (cov + cov.transpose()) * 0.5;
        if !mean.iter().chain(cov.iter()).all(|v| v.is_finite()) {
            return Err(TrackerError::NumericalFault("non-finite fused estimate"));
        }
        Ok(MmEstimate {
            timestamp: z.map_or(est.timestamp + dt, |z| z.timestamp),
            names: est.names.clone(),
            models: states,
            mu,
            fused_position: Point::new(mean[0], mean[1]),
            fused_cov_pos: cov.fixed_view::<2, 2>(0, 0).into_owned(),
            fused: Kinematic { mean, cov },
            likelihood_fallback: fallback,
        })
    }
}

pub fn gpb1_step(bank: &Gpb1, est: &MmEstimate, z: Option<&Measurement>, dt: f64) -> Result<MmEstimate, TrackerError> {
    bank.step(est, z, dt)
}
