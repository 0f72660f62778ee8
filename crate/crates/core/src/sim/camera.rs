use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{FrameTransform, Point, Pose2D};
use crate::sim::{stream_rng, AgentId, WorldState};

/// Pin-hole camera mounted on the robot. Camera frame C: x right, y down,
/// z along the optical axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub hfov_deg: f64,
    pub width: u32,
    pub height: u32,
    pub depth_min: f64,
    pub depth_max: f64,
    pub p_miss: f64,
    pub sigma_px: f64,
    pub sigma_z: f64,
    pub sigma_e: f64,
    /// Height of the optical centre above the floor.
    pub mount_height: f64,
    /// Height of a person's body centroid above the floor.
    pub body_centroid_height: f64,
    pub body_height: f64,
    /// Camera pose in the LIDAR frame (the ^L T_C calibration).
    pub mount: FrameTransform,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            hfov_deg: 69.4,
            width: 640,
            height: 480,
            depth_min: 0.5,
            depth_max: 3.0,
            p_miss: 0.05,
            sigma_px: 2.0,
            sigma_z: 0.02,
            sigma_e: 0.05,
            mount_height: 1.0,
            body_centroid_height: 0.9,
            body_height: 1.7,
            mount: FrameTransform::identity(),
        }
    }
}

impl CameraConfig {
    pub fn focal_px(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.hfov_deg.to_radians()).tan()
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (0.5 * self.width as f64, 0.5 * self.height as f64)
    }

    /// Point in the LIDAR plane → (x_c, z_c) in the camera frame.
    pub fn lidar_to_camera_plane(&self, p_lidar: &Point) -> (f64, f64) {
        let q = self.mount.inverse().apply(p_lidar);
        (-q.y, q.x)
    }

    /// Horizontal pixel coordinate of a LIDAR-plane point, if in front of the
    /// camera.
    pub fn pixel_u(&self, p_lidar: &Point) -> Option<f64> {
        let (xc, zc) = self.lidar_to_camera_plane(p_lidar);
        (zc > 1e-6).then(|| self.principal_point().0 + self.focal_px() * xc / zc)
    }

    /// Noise-free projection of agent `index`, or `None` when it is outside the
    /// FOV, outside the depth window, or occluded.
    pub fn project(&self, world: &WorldState, robot_pose: &Pose2D, index: usize) -> Option<Projection> {
        let centre_w = world.poses[index].position();
        let radius = world.agents[index].body_radius;
        let cam_in_world = robot_pose.as_transform().compose(&self.mount);
        let cam_origin = cam_in_world.apply(&Point::origin());
        let local = cam_in_world.inverse().apply(&centre_w);
        let z = local.x;
        let xc = -local.y;
        if z < self.depth_min || z > self.depth_max {
            return None;
        }
        if xc.atan2(z).abs() > 0.5 * self.hfov_deg.to_radians() {
            return None;
        }
        if occluded(world, index, &cam_origin, &centre_w) {
            return None;
        }
        let yc = self.mount_height - self.body_centroid_height;
        let f = self.focal_px();
        let (cx, cy) = self.principal_point();
        let u = cx + f * xc / z;
        let v = cy + f * yc / z;
        let w = f * 2.0 * radius / z;
        let h = f * self.body_height / z;
        Some(Projection {
            bbox: BBox::from_center(u, v, w, h),
            centroid_c: [xc, yc, z],
        })
    }
}

fn segment_point_distance(a: &Point, b: &Point, p: &Point) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a + ab * t - p).norm()
}

fn segments_intersect(p1: &Point, p2: &Point, q1: &Point, q2: &Point) -> bool {
    let cross = |o: &Point, a: &Point, b: &Point| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Binary visibility: any other agent disk or obstacle crossing the sight
/// segment hides the target.
fn occluded(world: &WorldState, target: usize, from: &Point, to: &Point) -> bool {
    let by_agent = world
        .disks()
        .filter(|(_, _, i)| *i != target)
        .any(|(c, r, _)| segment_point_distance(from, to, &c) < r);
    by_agent
        || world.obstacles.iter().any(|ob| {
            let (a, b) = ob.endpoints();
            segments_intersect(from, to, &a, &b)
        })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn from_center(u: f64, v: f64, w: f64, h: f64) -> Self {
        Self {
            x: u - 0.5 * w,
            y: v - 0.5 * h,
            w,
            h,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub bbox: BBox,
    pub centroid_c: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub timestamp: f64,
    pub bbox: BBox,
    pub centroid_c: [f64; 3],
    pub embedding: Vec<f64>,
    /// Ground truth, used only for evaluation.
    pub agent_truth: AgentId,
}

pub const CAMERA_STREAM: u64 = 2;

/// Person detections with appearance embeddings for every visible agent.
pub fn simulate_camera(world: &WorldState, robot_pose: &Pose2D, cfg: &CameraConfig, rng_seed: u64) -> Vec<Detection> {
    let mut rng = stream_rng(rng_seed, CAMERA_STREAM, 0);
    let px = Normal::new(0.0, cfg.sigma_px.max(0.0)).expect("finite sigma");
    let depth = Normal::new(0.0, cfg.sigma_z.max(0.0)).expect("finite sigma");
    let emb = Normal::new(0.0, cfg.sigma_e.max(0.0)).expect("finite sigma");
    let f = cfg.focal_px();
    let (cx, _) = cfg.principal_point();
    let mut out = Vec::new();
    for index in 0..world.agents.len() {
        let Some(proj) = cfg.project(world, robot_pose, index) else {
            continue;
        };
        // draw every variate so the stream layout does not depend on outcomes
        let miss = rng.gen::<f64>() < cfg.p_miss;
        let du = px.sample(&mut rng);
        let dv = px.sample(&mut rng);
        let dz = depth.sample(&mut rng);
        let embedding: Vec<f64> = world.agents[index]
            .embedding_mean
            .iter()
            .map(|m| m + emb.sample(&mut rng))
            .collect();
        if miss {
            continue;
        }
        let (u0, v0) = proj.bbox.center();
        let u = u0 + du;
        let bbox = BBox::from_center(u, v0 + dv, proj.bbox.w, proj.bbox.h);
        let z = (proj.centroid_c[2] + dz).max(1e-3);
        let xc = (u - cx) * z / f;
        out.push(Detection {
            timestamp: world.time,
            bbox,
            centroid_c: [xc, proj.centroid_c[1], z],
            embedding,
            agent_truth: world.agents[index].id,
        });
    }
    out
}
