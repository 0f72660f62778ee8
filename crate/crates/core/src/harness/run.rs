use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, Metrics};
use super::scenario::Scenario;
use crate::control::{Controller, SafetyEvent};
use crate::fusion::{camera_to_lidar, cluster_scan, corrected_centroid, fuse_step, FusionMode, FusionState};
use crate::geometry::{Point, Pose2D};
use crate::path::{ClothoidSpline, PathBuilder, PathStats};
use crate::recognition::{
    following_step, largest_detection, run_initialisation, ImageTracker, KnnModel, RecognitionState,
};
use crate::sim::{simulate_camera, simulate_lidar, stream_rng, step_unicycle, ControlInput, Detection, WorldState};
use crate::tracker::{check_fault, local_to_world, FaultStatus, Gpb1, Measurement, MmEstimate};

const SENSOR_SEED_STREAM: u64 = 20;
const TRACKER_DRIFT_STREAM: u64 = 21;
const INIT_SAMPLING_STREAM: u64 = 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Fault,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPhase {
    Init,
    Following,
}

/// Where this step's camera leader observation came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraSource {
    None,
    Detector,
    Tracker,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    /// Position covariance `[xx, xy, yy]`.
    pub cov: [f64; 3],
    /// Model probabilities keyed by model name.
    pub mu: BTreeMap<String, f64>,
    pub likelihood_fallback: bool,
}

impl EstimateRecord {
    fn from_estimate(e: &MmEstimate) -> Self {
        let c = &e.fused_cov_pos;
        Self {
            x: e.fused_position.x,
            y: e.fused_position.y,
            vx: e.velocity().0,
            vy: e.velocity().1,
            cov: [c[(0, 0)], c[(0, 1)], c[(1, 1)]],
            mu: e.names.iter().map(|n| n.to_string()).zip(e.mu.iter().copied()).collect(),
            likelihood_fallback: e.likelihood_fallback,
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// One simulation step. Poses and the command refer to the start of the
/// step; the command is applied over the following `dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub phase: StepPhase,
    pub robot: Pose2D,
    /// True pose of every agent, keyed by id.
    pub agents: BTreeMap<u32, Pose2D>,
    /// Agents the camera could see this step (inside the cone and depth
    /// window, unoccluded).
    pub visible: Vec<u32>,
    /// Leader bearing lies inside the camera's horizontal field of view.
    pub leader_in_fov: bool,
    pub camera_source: CameraSource,
    pub camera_truth: Option<u32>,
    pub mode: FusionMode,
    /// Fused leader measurement in the world frame.
    pub measurement: Option<[f64; 2]>,
    /// Ground-truth id of the agent nearest to the fused measurement.
    pub target_truth: Option<u32>,
    pub estimate: Option<EstimateRecord>,
    pub spline_version: u64,
    pub command: ControlInput,
    pub v_target: f64,
    pub lateral_error: Option<f64>,
    pub gap: Option<f64>,
    pub obstacle_distance: Option<f64>,
    pub safety_scale: f64,
    pub events: Vec<SafetyEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSummary {
    pub frames: usize,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub scenario: Scenario,
    pub leader_id: u32,
    pub status: RunStatus,
    pub fault: Option<String>,
    pub init: Option<InitSummary>,
    pub steps: Vec<StepRecord>,
    pub events: Vec<SafetyEvent>,
    pub path_stats: PathStats,
    pub spline: Option<ClothoidSpline>,
    pub metrics: Metrics,
}

/// Distance beyond the body radius within which a fused measurement is
/// attributed to an agent.
const ATTRIBUTION_MARGIN: f64 = 0.3;

fn attribute(p: &Point, world: &WorldState) -> Option<u32> {
    world
        .agents
        .iter()
        .zip(&world.poses)
        .map(|(a, q)| (a.id.0, (q.position() - p).norm() - a.body_radius))
        .filter(|(_, d)| *d <= ATTRIBUTION_MARGIN)
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(id, _)| id)
}

fn leader_in_fov(scn: &Scenario, world: &WorldState, robot: &Pose2D, leader: usize) -> bool {
    let cam = &scn.sensors.camera;
    let local = robot.as_transform().inverse().apply(&world.poses[leader].position());
    let (xc, zc) = cam.lidar_to_camera_plane(&local);
    zc > 0.0 && xc.atan2(zc).abs() <= 0.5 * cam.hfov_deg.to_radians()
}

fn world_to_local(p: &Point, robot: &Pose2D) -> Point {
    robot.as_transform().inverse().apply(p)
}

struct Recogniser {
    state: RecognitionState,
    model: Option<KnnModel>,
    tracker: ImageTracker,
    init_frames: Vec<Vec<Detection>>,
    last_init: Option<Detection>,
}

/// Runs the full perception → fusion → tracking → path → control loop.
pub fn run(scn: &Scenario) -> RunLog {
    let dt = scn.dt;
    let steps = scn.step_count();
    let mut world = WorldState::new(scn.world_agents(), scn.obstacles.clone(), 0.0);
    let leader_idx = world.leader_index().expect("validated scenario has a leader");
    let leader_id = world.agents[leader_idx].id.0;
    let mut log = RunLog {
        scenario: scn.clone(),
        leader_id,
        status: RunStatus::Completed,
        fault: None,
        init: None,
        steps: Vec::with_capacity(steps),
        events: Vec::new(),
        path_stats: PathStats::default(),
        spline: None,
        metrics: Metrics::default(),
    };
    let fail = |mut log: RunLog, msg: String| {
        log.status = RunStatus::Fault;
        log.fault = Some(msg);
        log
    };

    let pool = match scn.negative_pool() {
        Ok(p) => p,
        Err(e) => return finish(fail(log, e.to_string())),
    };
    let bank = match Gpb1::from_config(&scn.tracker) {
        Ok(b) => b,
        Err(e) => return finish(fail(log, e.to_string())),
    };
    let mut controller = match Controller::new(scn.control.clone()) {
        Ok(c) => c,
        Err(e) => return finish(fail(log, e.to_string())),
    };
    let mut paths = PathBuilder::new(scn.path.clone());
    // the leader starts in front of the robot, so the route starts at the robot
    paths.push(scn.robot_start.position(), 0.0);
    let mut rec = Recogniser {
        state: RecognitionState::initialising(0.0, scn.recognition.init_window),
        model: None,
        tracker: ImageTracker::new(),
        init_frames: Vec::new(),
        last_init: None,
    };
    let mut fusion = FusionState::bootstrap();
    let mut estimate: Option<MmEstimate> = None;
    let mut robot = scn.robot_start;
    let mut prev_robot = robot;
    let mut fault: Option<String> = None;
    let cam_cfg = &scn.sensors.camera;

    for k in 0..steps {
        let t = k as f64 * dt;
        world.set_time(t);
        let phase = if t < scn.recognition.init_window - 1e-9 {
            StepPhase::Init
        } else {
            StepPhase::Following
        };
        if phase == StepPhase::Following && rec.model.is_none() {
            let mut rng = stream_rng(scn.seed, INIT_SAMPLING_STREAM, 0);
            match run_initialisation(&rec.init_frames, &pool, &scn.recognition, &mut rng) {
                Ok(m) => {
                    log.init = Some(InitSummary {
                        frames: rec.init_frames.len(),
                        positives: m.positive_count(),
                        negatives: m.negative_count(),
                    });
                    rec.model = Some(m);
                    if let Some(d) = &rec.last_init {
                        rec.state.start_following(d);
                        rec.tracker.reinitialise(d);
                    }
                }
                Err(e) => {
                    fault = Some(format!("initialisation: {e}"));
                    break;
                }
            }
        }

        let sensor_seed = {
            use rand::RngCore;
            stream_rng(scn.seed, SENSOR_SEED_STREAM, k as u64).next_u64()
        };
        let scan = simulate_lidar(&world, &robot, &scn.sensors.lidar, sensor_seed);
        let clusters = cluster_scan(&scan, scn.fusion.d_max, scn.fusion.n_min);
        let visible: Vec<u32> = (0..world.agents.len())
            .filter(|&i| cam_cfg.project(&world, &robot, i).is_some())
            .map(|i| world.agents[i].id.0)
            .collect();

        // camera leader observation, in the current LIDAR frame
        let (mut camera_point, mut camera_source, mut camera_truth) = (None, CameraSource::None, None);
        match phase {
            StepPhase::Init => {
                let dets = simulate_camera(&world, &robot, cam_cfg, sensor_seed);
                if let Some(d) = largest_detection(&dets) {
                    camera_point = Some(camera_to_lidar(&d.centroid_c, &cam_cfg.mount));
                    camera_source = CameraSource::Detector;
                    camera_truth = Some(d.agent_truth.0);
                    rec.last_init = Some(d.clone());
                }
                rec.init_frames.push(dets);
            }
            StepPhase::Following => {
                let model = rec.model.as_mut().expect("initialised above");
                if rec.tracker.detection_due(scn.recognition.frames_per_cycle) {
                    let dets = simulate_camera(&world, &robot, cam_cfg, sensor_seed);
                    let feedback = fusion
                        .leader_local
                        .filter(|_| fusion.mode.is_tracked())
                        .and_then(|p| cam_cfg.pixel_u(&project_prior(&p, &prev_robot, &robot)))
                        .zip(rec.state.last_bbox.map(|b| b.center().1));
                    match following_step(&dets, &mut rec.state, model, feedback, t, &scn.recognition) {
                        Ok(out) => match out.leader {
                            Some(d) => {
                                rec.tracker.reinitialise(&d);
                                camera_point = Some(camera_to_lidar(&d.centroid_c, &cam_cfg.mount));
                                camera_source = CameraSource::Detector;
                                camera_truth = Some(d.agent_truth.0);
                            }
                            None => rec.tracker.drop_lock(),
                        },
                        Err(e) => {
                            fault = Some(format!("recognition: {e}"));
                            break;
                        }
                    }
                } else {
                    let mut rng = ChaCha8Rng::from_rng(stream_rng(scn.seed, TRACKER_DRIFT_STREAM, k as u64))
                        .expect("chacha seeds from chacha");
                    if let Some(tb) =
                        rec.tracker
                            .track(&world, &robot, cam_cfg, scn.recognition.tracker_drift_px, &mut rng)
                    {
                        rec.state.last_bbox = Some(tb.bbox);
                        camera_point = Some(camera_to_lidar(&tb.centroid_c, &cam_cfg.mount));
                        camera_source = CameraSource::Tracker;
                        camera_truth = Some(tb.agent_truth.0);
                    }
                }
            }
        }

        // while coasting, the tracker's prediction stands in for the
        // odometry-only prior so the association gate follows the leader
        let mut prior = fusion.clone();
        if prior.mode.is_tracked() && (prior.frames_since_lidar > 0 && prior.frames_since_camera > 0) {
            if let Some(e) = &estimate {
                let (vx, vy) = e.velocity();
                let predicted = e.fused_position + nalgebra::Vector2::new(vx, vy) * dt;
                prior.leader_local = Some(world_to_local(&predicted, &prev_robot));
            }
        }
        let motion = prev_robot.relative(&robot);
        let out = fuse_step(&clusters, camera_point, &prior, &motion, &scn.fusion);
        fusion = out.state.clone();
        let measurement_world = out.measurement.map(|m| local_to_world(&m, &robot));
        let target_truth = measurement_world.and_then(|m| attribute(&m, &world));

        // tracker
        let mut tracker_fault = None;
        let z = measurement_world.map(|m| Measurement::new(m, scn.tracker.measurement_sigma, t));
        estimate = match (&estimate, &z) {
            (None, Some(z)) => Some(bank.init(z)),
            (None, None) => None,
            (Some(e), z) => match bank.step(e, z.as_ref(), dt) {
                Ok(next) => Some(next),
                Err(err) => {
                    tracker_fault = Some(format!("tracker: {err}"));
                    None
                }
            },
        };
        if let Some(e) = &estimate {
            if check_fault(e, scn.tracker.fault_limit) == FaultStatus::Fault {
                tracker_fault = Some(format!(
                    "tracker: position uncertainty above {} m at t = {t:.2}",
                    scn.tracker.fault_limit
                ));
            }
        }

        // path: footsteps are admitted only on steps with a fused measurement
        if let (Some(e), true) = (&estimate, z.is_some()) {
            paths.push(e.fused_position, t);
        }
        let spline = paths.spline();

        let mut record = StepRecord {
            k,
            t,
            phase,
            robot,
            agents: world.agents.iter().zip(&world.poses).map(|(a, p)| (a.id.0, *p)).collect(),
            visible,
            leader_in_fov: leader_in_fov(scn, &world, &robot, leader_idx),
            camera_source,
            camera_truth,
            mode: fusion.mode,
            measurement: measurement_world.map(|m| [m.x, m.y]),
            target_truth,
            estimate: estimate.as_ref().map(EstimateRecord::from_estimate),
            spline_version: paths.version(),
            command: ControlInput::stop(),
            v_target: 0.0,
            lateral_error: None,
            gap: None,
            obstacle_distance: None,
            safety_scale: 1.0,
            events: Vec::new(),
        };

        if let Some(msg) = tracker_fault {
            record.command = controller.halt();
            log.steps.push(record);
            fault = Some(msg);
            break;
        }

        if phase == StepPhase::Following {
            let leader_world = estimate.as_ref().map(|e| e.fused_position);
            // non-leader clusters close enough to matter
            let obstacles: Vec<Point> = clusters
                .iter()
                .enumerate()
                .filter(|(i, _)| Some(*i) != out.leader_cluster)
                .map(|(_, c)| c)
                .filter(|c| c.centroid.coords.norm() <= scn.control.d_slow + 0.5)
                .filter(|c| {
                    let body = local_to_world(&corrected_centroid(c, scn.fusion.cluster_range_offset), &robot);
                    leader_world.is_none_or(|l| (body - l).norm() > scn.fusion.gate)
                })
                .map(|c| local_to_world(&c.centroid, &robot))
                .collect();
            let ctl = controller.step(&robot, spline.as_deref(), leader_world.as_ref(), &obstacles, t, dt);
            record.command = ctl.input;
            record.v_target = ctl.v_target;
            record.lateral_error = ctl.projection.map(|p| p.lateral_error);
            record.gap = ctl.gap;
            record.obstacle_distance = ctl.obstacle_distance;
            record.safety_scale = ctl.safety_scale;
            record.events = ctl.events.clone();
            log.events.extend(ctl.events);
        }

        let command = record.command;
        log.steps.push(record);
        prev_robot = robot;
        robot = step_unicycle(&robot, &command, dt);
    }

    log.path_stats = paths.stats();
    log.spline = paths.spline().map(|s| (*s).clone());
    if let Some(msg) = fault {
        log = fail(log, msg);
    }
    finish(log)
}

/// Re-expresses a point of the previous LIDAR frame in the current one.
fn project_prior(p: &Point, prev: &Pose2D, now: &Pose2D) -> Point {
    crate::geometry::project_between_frames(p, &prev.relative(now))
}

fn finish(mut log: RunLog) -> RunLog {
    log.metrics = compute_metrics(&log);
    log
}
