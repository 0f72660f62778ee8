//! Path following on the published spline: projection, a curvature-domain
//! steering law, the velocity policy and the slow/stop/alert safety monitor.

mod safety;

pub use safety::{SafetyEvent, SafetyKind, SafetyMonitor, Zone};

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Point, Pose2D};
use crate::path::ClothoidSpline;
use crate::sim::ControlInput;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("controller parameter {0} must be strictly positive")]
    NonPositive(&'static str),
    #[error("d_stop ({d_stop}) must be below d_slow ({d_slow})")]
    StopBeyondSlow { d_stop: f64, d_slow: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Lateral gain (1/m²).
    pub k_lat: f64,
    /// Heading gain (1/m).
    pub k_head: f64,
    pub v_nominal: f64,
    pub a_max: f64,
    /// Curvilinear gap held behind the leader.
    pub follow_distance: f64,
    /// Speed cap on a straight path; divided by `1 + |κ|·curvature_scale`.
    pub v_curv_coeff: f64,
    /// Length scale (m) that makes `|κ|·curvature_scale` dimensionless.
    pub curvature_scale: f64,
    pub d_slow: f64,
    pub d_stop: f64,
    pub t_alert: f64,
    /// An obstacle must recede this far past a zone threshold before the
    /// zone is left.
    pub release_margin: f64,
    /// Half-width of the corridor around the path searched for obstacles.
    pub corridor_half_width: f64,
    /// Coarse grid step of the projection search.
    pub projection_step: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            k_lat: 1.5,
            k_head: 2.5,
            v_nominal: 0.8,
            a_max: 0.5,
            follow_distance: 1.5,
            v_curv_coeff: 1.0,
            curvature_scale: 1.0,
            d_slow: 1.5,
            d_stop: 0.6,
            t_alert: 3.0,
            release_margin: 0.2,
            corridor_half_width: 0.4,
            projection_step: 0.05,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        let fields = [
            ("k_lat", self.k_lat),
            ("k_head", self.k_head),
            ("v_nominal", self.v_nominal),
            ("a_max", self.a_max),
            ("follow_distance", self.follow_distance),
            ("v_curv_coeff", self.v_curv_coeff),
            ("curvature_scale", self.curvature_scale),
            ("d_slow", self.d_slow),
            ("d_stop", self.d_stop),
            ("t_alert", self.t_alert),
            ("release_margin", self.release_margin),
            ("corridor_half_width", self.corridor_half_width),
            ("projection_step", self.projection_step),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ControlError::NonPositive(name));
            }
        }
        if self.d_stop >= self.d_slow {
            return Err(ControlError::StopBeyondSlow {
                d_stop: self.d_stop,
                d_slow: self.d_slow,
            });
        }
        Ok(())
    }
}

/// Closest point of the path to a pose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathProjection {
    pub s: f64,
    /// Positive when the robot is to the left of the path.
    pub lateral_error: f64,
    /// Robot heading minus path tangent, in `(-π, π]`.
    pub heading_error: f64,
    pub kappa: f64,
    pub foot: Pose2D,
}

const GOLDEN_ITERS: usize = 60;

/// Global projection onto the spline: every segment is sampled at most
/// `step` apart, then golden-section search refines the best sample inside
/// one step on either side. `s` is exact to the refinement tolerance
/// (about 1e-12 m) whenever the nearest point is unique within `step` of
/// the best sample.
pub fn project_to_path(pose: &Pose2D, spline: &ClothoidSpline, step: f64) -> PathProjection {
    assert!(!spline.is_empty(), "projection onto an empty spline");
    assert!(step > 0.0);
    let p = pose.position();
    let offsets = spline.offsets();
    let dist2 = |seg: usize, local: f64| (spline.segments[seg].point_at(local) - p).norm_squared();

    let mut best = (0usize, 0.0, f64::INFINITY);
    for (i, seg) in spline.segments.iter().enumerate() {
        let n = (seg.length / step).ceil().max(1.0) as usize;
        for k in 0..=n {
            let local = seg.length * k as f64 / n as f64;
            let d = dist2(i, local);
            if d < best.2 {
                best = (i, local, d);
            }
        }
    }

    // refine on the global arc-length axis so the bracket may straddle a joint
    let total = spline.total_length();
    let at = |s: f64| {
        let i = offsets.partition_point(|o| *o <= s).saturating_sub(1);
        (i, (s - offsets[i]).clamp(0.0, spline.segments[i].length))
    };
    let f = |s: f64| {
        let (i, l) = at(s);
        dist2(i, l)
    };
    let s0 = offsets[best.0] + best.1;
    let (mut a, mut b) = ((s0 - step).max(0.0), (s0 + step).min(total));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let s = [(s0, best.2), (mid, f(mid))]
        .into_iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(s, _)| s)
        .unwrap();

    let (i, l) = at(s);
    let seg = &spline.segments[i];
    let foot = seg.pose_at(l);
    let normal = nalgebra::Vector2::new(-foot.theta.sin(), foot.theta.cos());
    PathProjection {
        s,
        lateral_error: (p - foot.position()).dot(&normal),
        heading_error: normalize_angle(pose.theta - foot.theta),
        kappa: seg.kappa_at(l),
        foot,
    }
}

/// Curvature command `χ = κ − k_head·e_θ − k_lat·e_lat`; the yaw rate is
/// `ω = v·χ`, so nothing divides by the speed.
pub fn steer(lateral_error: f64, heading_error: f64, kappa: f64, cfg: &ControllerConfig) -> f64 {
    kappa - cfg.k_head * heading_error - cfg.k_lat * lateral_error
}

/// Speed the policy aims for before acceleration limiting.
pub fn velocity_target(gap: f64, kappa: f64, cfg: &ControllerConfig) -> f64 {
    let fd = cfg.follow_distance;
    let distance = cfg.v_nominal * ((gap - fd) / fd).clamp(0.0, 1.0);
    let curve = cfg.v_curv_coeff / (1.0 + kappa.abs() * cfg.curvature_scale);
    distance.min(curve)
}

/// Moves from `v_prev` toward `target` by at most `a_max·dt`, never below 0.
pub fn rate_limit(target: f64, v_prev: f64, dt: f64, a_max: f64) -> f64 {
    assert!(dt > 0.0, "dt must be positive");
    let step = a_max * dt;
    target.clamp(v_prev - step, v_prev + step).max(0.0)
}

pub fn velocity_policy(gap: f64, kappa: f64, v_prev: f64, dt: f64, cfg: &ControllerConfig) -> f64 {
    rate_limit(velocity_target(gap, kappa, cfg), v_prev, dt, cfg.a_max)
}

/// Yaw rate for a speed and curvature command; exactly 0 at standstill.
pub fn yaw_rate(v: f64, chi: f64) -> f64 {
    if v == 0.0 || !chi.is_finite() {
        0.0
    } else {
        v * chi
    }
}

/// Curvilinear distance from the robot to the leader: the path ahead of
/// the projection, the straight hop from the path end to the leader, and
/// any distance the robot sits behind the path start.
pub fn leader_gap(pose: &Pose2D, proj: &PathProjection, spline: &ClothoidSpline, leader: &Point) -> f64 {
    let total = spline.total_length();
    let end = spline.end_point().expect("non-empty spline");
    let mut gap = (total - proj.s).max(0.0) + (leader - end).norm();
    if proj.s == 0.0 {
        let start = spline.start_pose().expect("non-empty spline");
        let tangent = nalgebra::Vector2::new(start.theta.cos(), start.theta.sin());
        gap += (-(pose.position() - start.position()).dot(&tangent)).max(0.0);
    }
    gap
}

/// Nearest obstacle ahead along the path: points within the corridor
/// half-width of the path and ahead of the robot, measured in arc length.
pub fn obstacle_distance(
    robot_s: f64,
    obstacles: &[Point],
    spline: &ClothoidSpline,
    cfg: &ControllerConfig,
) -> Option<f64> {
    obstacles
        .iter()
        .filter_map(|o| {
            let proj = project_to_path(&Pose2D::new(o.x, o.y, 0.0), spline, cfg.projection_step);
            let ahead = proj.s - robot_s;
            (proj.lateral_error.abs() <= cfg.corridor_half_width && ahead > 0.0).then_some(ahead)
        })
        .min_by(f64::total_cmp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlOutput {
    pub input: ControlInput,
    pub projection: Option<PathProjection>,
    pub gap: Option<f64>,
    pub v_target: f64,
    pub obstacle_distance: Option<f64>,
    pub safety_scale: f64,
    pub events: Vec<SafetyEvent>,
}

/// Per-run controller state: the previous speed and the safety monitor.
#[derive(Clone, Debug)]
pub struct Controller {
    cfg: ControllerConfig,
    v_prev: f64,
    safety: SafetyMonitor,
}

impl Controller {
    pub fn new(cfg: ControllerConfig) -> Result<Self, ControlError> {
        cfg.validate()?;
        Ok(Self {
            safety: SafetyMonitor::new(cfg.clone()),
            cfg,
            v_prev: 0.0,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn v_prev(&self) -> f64 {
        self.v_prev
    }

    pub fn safety(&self) -> &SafetyMonitor {
        &self.safety
    }

    /// One control cycle. Without a path the robot brakes at `a_max` and
    /// holds its heading.
    pub fn step(
        &mut self,
        pose: &Pose2D,
        spline: Option<&ClothoidSpline>,
        leader: Option<&Point>,
        obstacles: &[Point],
        now: f64,
        dt: f64,
    ) -> ControlOutput {
        let Some(spline) = spline.filter(|s| !s.is_empty()) else {
            let v = rate_limit(0.0, self.v_prev, dt, self.cfg.a_max);
            self.v_prev = v;
            return ControlOutput {
                input: ControlInput::new(v, 0.0),
                projection: None,
                gap: None,
                v_target: 0.0,
                obstacle_distance: None,
                safety_scale: 1.0,
                events: Vec::new(),
            };
        };
        let proj = project_to_path(pose, spline, self.cfg.projection_step);
        let gap = leader.map(|l| leader_gap(pose, &proj, spline, l));
        let obstacle = obstacle_distance(proj.s, obstacles, spline, &self.cfg);
        let (scale, events) = self.safety.step(obstacle, gap, now);
        // no leader estimate means no reason to move
        let v_target = gap.map_or(0.0, |g| velocity_target(g, proj.kappa, &self.cfg)) * scale;
        let v = rate_limit(v_target, self.v_prev, dt, self.cfg.a_max);
        let chi = steer(proj.lateral_error, proj.heading_error, proj.kappa, &self.cfg);
        self.v_prev = v;
        ControlOutput {
            input: ControlInput::new(v, yaw_rate(v, chi)),
            projection: Some(proj),
            gap,
            v_target,
            obstacle_distance: obstacle,
            safety_scale: scale,
            events,
        }
    }

    /// Forces a standstill, e.g. after a tracker fault.
    pub fn halt(&mut self) -> ControlInput {
        self.v_prev = 0.0;
        ControlInput::stop()
    }
}
