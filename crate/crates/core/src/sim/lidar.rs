use std::f64::consts::TAU;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Pose2D};
use crate::sim::{stream_rng, WorldState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarConfig {
    pub angular_resolution_deg: f64,
    pub range_noise: f64,
    pub r_max: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            angular_resolution_deg: 0.5,
            range_noise: 0.01,
            r_max: 40.0,
        }
    }
}

impl LidarConfig {
    pub fn ray_count(&self) -> usize {
        (360.0 / self.angular_resolution_deg).round() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub r: f64,
    pub alpha: f64,
}

impl ScanPoint {
    pub fn to_cartesian(&self) -> Point {
        Point::new(self.r * self.alpha.cos(), self.r * self.alpha.sin())
    }
}

/// One 360° sweep in the sensor frame L, ordered by bearing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub timestamp: f64,
    pub points: Vec<ScanPoint>,
}

/// Smallest positive ray parameter hitting the circle, if any.
pub(crate) fn ray_circle(origin: &Point, dir: (f64, f64), center: &Point, radius: f64) -> Option<f64> {
    let ox = origin.x - center.x;
    let oy = origin.y - center.y;
    let b = ox * dir.0 + oy * dir.1;
    let c = ox * ox + oy * oy - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = -b - sq;
    if t0 > 0.0 {
        return Some(t0);
    }
    let t1 = -b + sq;
    (t1 > 0.0).then_some(t1)
}

pub(crate) fn ray_segment(origin: &Point, dir: (f64, f64), a: &Point, b: &Point) -> Option<f64> {
    let ex = b.x - a.x;
    let ey = b.y - a.y;
    let denom = dir.0 * ey - dir.1 * ex;
    if denom.abs() < 1e-15 {
        return None;
    }
    let wx = a.x - origin.x;
    let wy = a.y - origin.y;
    let t = (wx * ey - wy * ex) / denom;
    let u = (wx * dir.1 - wy * dir.0) / denom;
    (t > 0.0 && (0.0..=1.0).contains(&u)).then_some(t)
}

/// Range along a world-frame ray to the nearest agent disk or obstacle.
pub(crate) fn cast_ray(world: &WorldState, origin: &Point, heading: f64) -> Option<f64> {
    let dir = (heading.cos(), heading.sin());
    let mut best: Option<f64> = None;
    let mut keep = |t: f64| {
        if best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };
    for (center, radius, _) in world.disks() {
        if let Some(t) = ray_circle(origin, dir, &center, radius) {
            keep(t);
        }
    }
    for ob in &world.obstacles {
        let (a, b) = ob.endpoints();
        if let Some(t) = ray_segment(origin, dir, &a, &b) {
            keep(t);
        }
    }
    best
}

pub const LIDAR_STREAM: u64 = 1;

/// Casts equally spaced rays over `[0, 2π)` from the robot pose (the LIDAR
/// frame coincides with the robot frame). Rays without a hit within `r_max`
/// are omitted.
pub fn simulate_lidar(world: &WorldState, robot_pose: &Pose2D, cfg: &LidarConfig, rng_seed: u64) -> Scan {
    let mut rng = stream_rng(rng_seed, LIDAR_STREAM, 0);
    let noise = Normal::new(0.0, cfg.range_noise.max(0.0)).expect("finite sigma");
    let n = cfg.ray_count();
    let origin = robot_pose.position();
    let mut points = Vec::new();
    for i in 0..n {
        let alpha = TAU * i as f64 / n as f64;
        let Some(range) = cast_ray(world, &origin, robot_pose.theta + alpha) else {
            continue;
        };
        if range > cfg.r_max {
            continue;
        }
        let r = if cfg.range_noise > 0.0 {
            (range + noise.sample(&mut rng)).clamp(1e-6, cfg.r_max)
        } else {
            range
        };
        points.push(ScanPoint { r, alpha });
    }
    Scan {
        timestamp: world.time,
        points,
    }
}
