use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::Pose2D;
use crate::sim::{AgentId, BBox, CameraConfig, Detection, WorldState};

/// Box produced by the image tracker between detection frames.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackedBox {
    pub bbox: BBox,
    pub centroid_c: [f64; 3],
    pub agent_truth: AgentId,
}

/// Stand-in for a correlation-filter image tracker. It follows whichever
/// agent it was last initialised on and accumulates a pixel random walk; it
/// loses lock as soon as the target is not visible.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImageTracker {
    target: Option<AgentId>,
    drift: (f64, f64),
    frames_since_detection: usize,
}

impl ImageTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_locked(&self) -> bool {
        self.target.is_some()
    }

    pub fn target(&self) -> Option<AgentId> {
        self.target
    }

    pub fn frames_since_detection(&self) -> usize {
        self.frames_since_detection
    }

    pub fn reinitialise(&mut self, det: &Detection) {
        self.target = Some(det.agent_truth);
        self.drift = (0.0, 0.0);
        self.frames_since_detection = 0;
    }

    pub fn drop_lock(&mut self) {
        self.target = None;
    }

    /// Whether this frame should run the detector instead of the tracker.
    pub fn detection_due(&self, frames_per_cycle: usize) -> bool {
        self.target.is_none() || self.frames_since_detection + 1 >= frames_per_cycle.max(1)
    }

    pub fn track<R: Rng>(
        &mut self,
        world: &WorldState,
        robot_pose: &Pose2D,
        camera: &CameraConfig,
        drift_px: f64,
        rng: &mut R,
    ) -> Option<TrackedBox> {
        self.frames_since_detection += 1;
        let id = self.target?;
        let index = world.index_of(id)?;
        let Some(proj) = camera.project(world, robot_pose, index) else {
            self.target = None;
            return None;
        };
        let walk = Normal::new(0.0, drift_px.max(0.0)).expect("finite sigma");
        let depth = Normal::new(0.0, camera.sigma_z.max(0.0)).expect("finite sigma");
        self.drift.0 += walk.sample(rng);
        self.drift.1 += walk.sample(rng);
        let dz = depth.sample(rng);
        let (u0, v0) = proj.bbox.center();
        let u = u0 + self.drift.0;
        let bbox = BBox::from_center(u, v0 + self.drift.1, proj.bbox.w, proj.bbox.h);
        let z = (proj.centroid_c[2] + dz).max(1e-3);
        let xc = (u - camera.principal_point().0) * z / camera.focal_px();
        Some(TrackedBox {
            bbox,
            centroid_c: [xc, proj.centroid_c[1], z],
            agent_truth: id,
        })
    }
}
