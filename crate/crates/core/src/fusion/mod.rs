//! LIDAR clustering, camera→LIDAR projection and the spatio-temporal
//! correspondence state machine that keeps the leader across single-sensor
//! dropouts.

mod cluster;

pub use cluster::{cluster_points, cluster_scan, Cluster};

use serde::{Deserialize, Serialize};

use crate::geometry::{project_between_frames, FrameTransform, Point, Pose2D};

/// Camera centroid `(x_c, y_c, z_c)` → LIDAR plane. The vertical axis `y_c`
/// is dropped; the optical axis maps to the planar forward axis and camera
/// `x` (right) to planar `-y`.
pub fn camera_to_lidar(c: &[f64; 3], t: &FrameTransform) -> Point {
    t.apply(&Point::new(c[2], -c[0]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FusionMode {
    Bootstrap,
    TrackedBoth,
    TrackedLidarOnly,
    TrackedCameraOnly,
    Lost,
}

impl FusionMode {
    pub fn is_tracked(&self) -> bool {
        matches!(
            self,
            FusionMode::TrackedBoth | FusionMode::TrackedLidarOnly | FusionMode::TrackedCameraOnly
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Single-linkage hop distance.
    pub d_max: f64,
    /// Minimum cluster size.
    pub n_min: usize,
    /// Association gate radius.
    pub gate: f64,
    /// Consecutive double misses before `Lost`.
    pub n_ttl: u32,
    /// Consecutive camera/LIDAR agreements required to leave `Bootstrap`.
    pub n_boot: u32,
    /// Range added to a cluster centroid along its bearing: the scan only
    /// sees the near side of a body, so the raw centroid sits short of the
    /// body centre.
    pub cluster_range_offset: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            d_max: 0.3,
            n_min: 4,
            gate: 0.6,
            n_ttl: 40,
            n_boot: 20,
            cluster_range_offset: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionState {
    pub mode: FusionMode,
    /// Leader position in the current LIDAR frame.
    pub leader_local: Option<Point>,
    pub frames_since_camera: u32,
    pub frames_since_lidar: u32,
    /// Consecutive agreements collected while bootstrapping.
    pub boot_count: u32,
}

impl Default for FusionState {
    fn default() -> Self {
        Self::bootstrap()
    }
}

impl FusionState {
    pub fn bootstrap() -> Self {
        Self {
            mode: FusionMode::Bootstrap,
            leader_local: None,
            frames_since_camera: 0,
            frames_since_lidar: 0,
            boot_count: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionOutput {
    pub state: FusionState,
    /// Fused leader position in the current frame `L_k`.
    pub measurement: Option<Point>,
    /// Index into the input clusters of the cluster associated with the
    /// leader this step.
    pub leader_cluster: Option<usize>,
}

/// Cluster centroid pushed out along its bearing by the configured offset.
pub fn corrected_centroid(c: &Cluster, offset: f64) -> Point {
    let r = c.centroid.coords.norm();
    if r < 1e-9 || offset == 0.0 {
        return c.centroid;
    }
    c.centroid * ((r + offset) / r)
}

fn nearest_within(points: &[Point], target: &Point, gate: f64) -> Option<(usize, Point)> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, *p, (p - target).norm()))
        .filter(|(_, _, d)| *d <= gate)
        .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)))
        .map(|(i, p, _)| (i, p))
}

/// One correspondence step.
///
/// `prior.leader_local` is expressed in `L_{k-1}`; `robot_motion` is the pose
/// of `L_k` in `L_{k-1}`.
///
/// While bootstrapping, the camera point must agree with a cluster within the
/// gate and lie ahead of the robot; `n_boot` agreements in a row (a frame
/// without a camera point neither counts nor breaks the run) promote the
/// state to `TrackedBoth`. While tracking, each source is associated with the
/// projected prior; when both miss, the prior coasts unchanged and the state
/// drops to `Lost` after `n_ttl` such steps. `Lost` re-enters `Bootstrap`.
pub fn fuse_step(
    clusters: &[Cluster],
    camera_leader_local: Option<Point>,
    prior: &FusionState,
    robot_motion: &Pose2D,
    cfg: &FusionConfig,
) -> FusionOutput {
    let projected = prior
        .leader_local
        .map(|p| project_between_frames(&p, robot_motion));
    let candidates: Vec<Point> = clusters
        .iter()
        .map(|c| corrected_centroid(c, cfg.cluster_range_offset))
        .collect();

    let mut state = prior.clone();
    if state.mode == FusionMode::Lost {
        state = FusionState::bootstrap();
    }

    if state.mode == FusionMode::Bootstrap {
        let projected = if prior.mode == FusionMode::Lost { None } else { projected };
        let Some(cam) = camera_leader_local else {
            state.leader_local = projected;
            return FusionOutput {
                state,
                measurement: None,
                leader_cluster: None,
            };
        };
        let agreement = (cam.x > 0.0)
            .then(|| nearest_within(&candidates, &cam, cfg.gate))
            .flatten();
        let Some((idx, lidar)) = agreement else {
            state.boot_count = 0;
            state.leader_local = None;
            return FusionOutput {
                state,
                measurement: None,
                leader_cluster: None,
            };
        };
        let mid = Point::from((cam.coords + lidar.coords) * 0.5);
        let continues = projected.is_some_and(|p| (mid - p).norm() <= cfg.gate);
        state.boot_count = if continues { state.boot_count + 1 } else { 1 };
        state.leader_local = Some(mid);
        state.frames_since_camera = 0;
        state.frames_since_lidar = 0;
        if state.boot_count >= cfg.n_boot {
            state.mode = FusionMode::TrackedBoth;
            return FusionOutput {
                state,
                measurement: Some(mid),
                leader_cluster: Some(idx),
            };
        }
        return FusionOutput {
            state,
            measurement: None,
            leader_cluster: Some(idx),
        };
    }

    let prior_pt = projected.expect("tracked modes carry a leader position");
    let lidar = nearest_within(&candidates, &prior_pt, cfg.gate);
    let camera = camera_leader_local.filter(|c| (c - prior_pt).norm() <= cfg.gate);

    let (mode, measurement) = match (lidar, camera) {
        (Some((_, l)), Some(c)) => (FusionMode::TrackedBoth, Some(Point::from((l.coords + c.coords) * 0.5))),
        (Some((_, l)), None) => (FusionMode::TrackedLidarOnly, Some(l)),
        (None, Some(c)) => (FusionMode::TrackedCameraOnly, Some(c)),
        (None, None) => (state.mode, None),
    };
    state.frames_since_lidar = if lidar.is_some() { 0 } else { state.frames_since_lidar.saturating_add(1) };
    state.frames_since_camera = if camera.is_some() { 0 } else { state.frames_since_camera.saturating_add(1) };
    state.mode = mode;
    state.leader_local = Some(measurement.unwrap_or(prior_pt));
    if measurement.is_none() && state.frames_since_lidar >= cfg.n_ttl && state.frames_since_camera >= cfg.n_ttl {
        state.mode = FusionMode::Lost;
        state.leader_local = None;
    }
    FusionOutput {
        state,
        measurement,
        leader_cluster: lidar.map(|(i, _)| i),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::transform_point;
    use nalgebra::Vector2;
    use proptest::prelude::*;

    fn cluster(x: f64, y: f64) -> Cluster {
        Cluster {
            centroid: Point::new(x, y),
            point_count: 10,
        }
    }

    fn cfg_no_offset() -> FusionConfig {
        FusionConfig {
            cluster_range_offset: 0.0,
            ..Default::default()
        }
    }

    fn tracked_at(p: Point) -> FusionState {
        FusionState {
            mode: FusionMode::TrackedBoth,
            leader_local: Some(p),
            frames_since_camera: 0,
            frames_since_lidar: 0,
            boot_count: 0,
        }
    }

    #[test]
    fn camera_to_lidar_examples() {
        let p = camera_to_lidar(&[0.0, 0.1, 2.0], &FrameTransform::identity());
        assert_eq!(p, Point::new(2.0, 0.0));
        let t = FrameTransform::new(Vector2::new(0.1, 0.0), 0.0);
        let p = camera_to_lidar(&[0.3, 0.1, 2.0], &t);
        assert!((p.x - 2.1).abs() < 1e-15 && (p.y + 0.3).abs() < 1e-15);
        let t = FrameTransform::new(Vector2::new(0.05, 0.02), 5f64.to_radians());
        let c = [0.4, -0.2, 1.7];
        let p = camera_to_lidar(&c, &t);
        let oracle = transform_point(&t, &Point::new(1.7, -0.4));
        assert!((p - oracle).norm() < 1e-15);
    }

    #[test]
    fn symmetric_midpoint() {
        let cfg = FusionConfig {
            gate: 0.5,
            ..cfg_no_offset()
        };
        let out = fuse_step(
            &[cluster(2.0, 0.1)],
            Some(Point::new(2.0, -0.1)),
            &tracked_at(Point::new(2.0, 0.0)),
            &Pose2D::identity(),
            &cfg,
        );
        assert_eq!(out.state.mode, FusionMode::TrackedBoth);
        let m = out.measurement.unwrap();
        assert!((m - Point::new(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn lidar_carries_a_turning_leader_without_camera() {
        let cfg = cfg_no_offset();
        let mut st = tracked_at(Point::new(1.5, 0.0));
        for k in 1..=5 {
            let a = 0.1 * k as f64;
            let c = cluster(1.5 * a.cos(), 1.5 * a.sin());
            let out = fuse_step(&[c], None, &st, &Pose2D::identity(), &cfg);
            assert_eq!(out.state.mode, FusionMode::TrackedLidarOnly);
            assert_eq!(out.measurement.unwrap(), c.centroid);
            st = out.state;
        }
        assert_eq!(st.frames_since_camera, 5);
    }

    #[test]
    fn double_dropout_ends_in_lost() {
        let cfg = cfg_no_offset();
        let mut st = tracked_at(Point::new(1.5, 0.0));
        for k in 1..=cfg.n_ttl {
            let out = fuse_step(&[], None, &st, &Pose2D::identity(), &cfg);
            assert!(out.measurement.is_none());
            st = out.state;
            if k < cfg.n_ttl {
                assert_eq!(st.mode, FusionMode::TrackedBoth);
                assert!(st.leader_local.is_some());
            }
        }
        assert_eq!(st.mode, FusionMode::Lost);
        assert!(st.leader_local.is_none());
    }

    #[test]
    fn bootstrap_needs_consecutive_agreement() {
        let cfg = cfg_no_offset();
        let mut st = FusionState::bootstrap();
        for k in 1..=cfg.n_boot {
            let out = fuse_step(&[cluster(1.5, 0.02)], Some(Point::new(1.52, 0.0)), &st, &Pose2D::identity(), &cfg);
            st = out.state;
            if k < cfg.n_boot {
                assert_eq!(st.mode, FusionMode::Bootstrap);
                assert!(out.measurement.is_none());
            } else {
                assert_eq!(st.mode, FusionMode::TrackedBoth);
                assert!(out.measurement.is_some());
            }
        }
    }

    #[test]
    fn bootstrap_rejects_targets_behind() {
        let cfg = cfg_no_offset();
        let out = fuse_step(
            &[cluster(-1.5, 0.0)],
            Some(Point::new(-1.5, 0.0)),
            &FusionState::bootstrap(),
            &Pose2D::identity(),
            &cfg,
        );
        assert_eq!(out.state.boot_count, 0);
    }

    #[test]
    fn bootstrap_never_goes_lidar_only() {
        let cfg = cfg_no_offset();
        let mut st = FusionState::bootstrap();
        for _ in 0..100 {
            st = fuse_step(&[cluster(1.5, 0.0)], None, &st, &Pose2D::identity(), &cfg).state;
            assert_eq!(st.mode, FusionMode::Bootstrap);
        }
    }

    #[test]
    fn prior_is_projected_by_robot_motion() {
        let cfg = cfg_no_offset();
        // leader static at 2 m; robot moves 0.5 m forward, so the cluster
        // now sits at 1.5 m in the new frame
        let st = tracked_at(Point::new(2.0, 0.0));
        let out = fuse_step(&[cluster(1.5, 0.0)], None, &st, &Pose2D::new(0.5, 0.0, 0.0), &cfg);
        assert_eq!(out.state.mode, FusionMode::TrackedLidarOnly);
        let wrong_motion = fuse_step(&[cluster(1.5, 0.0)], None, &st, &Pose2D::new(-0.5, 0.0, 0.0), &cfg);
        assert!(wrong_motion.measurement.is_none());
    }

    #[test]
    fn range_offset_moves_centroid_outwards() {
        let c = cluster(3.0, 4.0);
        let p = corrected_centroid(&c, 0.5);
        assert!((p.coords.norm() - 5.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn measurement_stays_inside_gate(
            px in -3.0..3.0f64, py in -3.0..3.0f64,
            clusters in proptest::collection::vec((-4.0..4.0f64, -4.0..4.0f64), 0..6),
            cam in proptest::option::of((-4.0..4.0f64, -4.0..4.0f64)),
            mx in -0.2..0.2f64, my in -0.2..0.2f64, mth in -0.3..0.3f64,
        ) {
            let cfg = FusionConfig::default();
            let st = tracked_at(Point::new(px, py));
            let cs: Vec<Cluster> = clusters.iter().map(|&(x, y)| cluster(x, y)).collect();
            let motion = Pose2D::new(mx, my, mth);
            let out = fuse_step(&cs, cam.map(|(x, y)| Point::new(x, y)), &st, &motion, &cfg);
            let proj = project_between_frames(&Point::new(px, py), &motion);
            if let Some(m) = out.measurement {
                prop_assert!((m - proj).norm() <= cfg.gate + 1e-12);
            }
        }
    }
}
