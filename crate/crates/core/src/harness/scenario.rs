use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::HarnessError;
use crate::control::ControllerConfig;
use crate::fusion::FusionConfig;
use crate::geometry::Pose2D;
use crate::path::PathConfig;
use crate::recognition::RecognitionConfig;
use crate::sim::{stream_rng, Agent, AgentId, Obstacle, Role, SensorConfig, TimedPose};
use crate::tracker::TrackerConfig;

pub const EMBEDDING_STREAM: u64 = 10;
pub const POOL_STREAM: u64 = 11;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: u32,
    pub role: Role,
    pub trajectory: Vec<TimedPose>,
    #[serde(default = "default_body_radius")]
    pub body_radius: f64,
    /// Drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_mean: Option<Vec<f64>>,
}

fn default_body_radius() -> f64 {
    0.25
}

/// Synthetic appearance space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dim: usize,
    /// Per-component spread of the generated agent means and pool entries.
    pub mean_sigma: f64,
    /// Size of the generated negative pool.
    pub pool_size: usize,
    /// Newline-delimited JSON pool file, used instead of generating one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negative_pool: Option<PathBuf>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            mean_sigma: 0.1,
            pool_size: 200,
            negative_pool: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub robot_start: Pose2D,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub sensors: SensorConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub recognition: RecognitionConfig,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub path: PathConfig,
    #[serde(default)]
    pub control: ControllerConfig,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_dt() -> f64 {
    0.05
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| HarnessError::Schema(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            HarnessError::Schema(m) => HarnessError::Schema(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Schema(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt: must be positive, got {}", self.dt));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration: must be positive, got {}", self.duration));
        }
        let leaders = self.agents.iter().filter(|a| a.role == Role::Leader).count();
        if leaders != 1 {
            return bad(format!("agents: exactly one leader required, found {leaders}"));
        }
        let mut ids = BTreeSet::new();
        for a in &self.agents {
            if !ids.insert(a.id) {
                return bad(format!("agents: duplicate id {}", a.id));
            }
            if a.trajectory.is_empty() {
                return bad(format!("agents[{}].trajectory: empty", a.id));
            }
            if a.trajectory.windows(2).any(|w| w[1].t <= w[0].t) {
                return bad(format!("agents[{}].trajectory: timestamps must increase", a.id));
            }
            if !a.body_radius.is_finite() || a.body_radius <= 0.0 {
                return bad(format!("agents[{}].body_radius: must be positive", a.id));
            }
            if let Some(m) = &a.embedding_mean {
                if m.len() != self.embedding.dim {
                    return bad(format!(
                        "agents[{}].embedding_mean: length {} differs from embedding.dim {}",
                        a.id,
                        m.len(),
                        self.embedding.dim
                    ));
                }
            }
        }
        if self.embedding.dim == 0 {
            return bad("embedding.dim: must be positive".into());
        }
        if self.embedding.negative_pool.is_none() && self.embedding.pool_size == 0 {
            return bad("embedding.pool_size: must be positive".into());
        }
        self.control
            .validate()
            .map_err(|e| HarnessError::Schema(format!("control: {e}")))?;
        // an infinite limit disables the fault check
        if self.tracker.fault_limit.is_nan() || self.tracker.fault_limit <= 0.0 {
            return bad("tracker.fault_limit: must be positive".into());
        }
        Ok(())
    }

    pub fn leader_id(&self) -> AgentId {
        AgentId(self.agents.iter().find(|a| a.role == Role::Leader).expect("validated").id)
    }

    pub fn step_count(&self) -> usize {
        (self.duration / self.dt + 1e-9).floor() as usize
    }

    /// World agents with embedding means filled in from the seed. Each agent
    /// draws from its own stream keyed by its id.
    pub fn world_agents(&self) -> Vec<Agent> {
        self.agents
            .iter()
            .map(|a| Agent {
                id: AgentId(a.id),
                role: a.role,
                trajectory: a.trajectory.clone(),
                body_radius: a.body_radius,
                embedding_mean: a
                    .embedding_mean
                    .clone()
                    .unwrap_or_else(|| self.generated_mean(a.id)),
            })
            .collect()
    }

    fn generated_mean(&self, id: u32) -> Vec<f64> {
        let mut rng = stream_rng(self.seed, EMBEDDING_STREAM, id as u64);
        let n = Normal::new(0.0, self.embedding.mean_sigma).expect("finite sigma");
        (0..self.embedding.dim).map(|_| n.sample(&mut rng)).collect()
    }

    /// Negative pool: loaded from file when configured, otherwise people
    /// drawn from the same appearance distribution as the agents.
    pub fn negative_pool(&self) -> Result<Vec<Vec<f64>>, HarnessError> {
        if let Some(p) = &self.embedding.negative_pool {
            let pool = crate::recognition::load_negative_pool(p).map_err(|e| HarnessError::Schema(e.to_string()))?;
            if pool.first().is_some_and(|e| e.len() != self.embedding.dim) {
                return Err(HarnessError::Schema(format!(
                    "embedding.negative_pool: dimension differs from embedding.dim {}",
                    self.embedding.dim
                )));
            }
            return Ok(pool);
        }
        let mut rng = ChaCha8Rng::from_rng(stream_rng(self.seed, POOL_STREAM, 0)).expect("chacha seeds from chacha");
        let n = Normal::new(0.0, self.embedding.mean_sigma).expect("finite sigma");
        Ok((0..self.embedding.pool_size)
            .map(|_| (0..self.embedding.dim).map(|_| n.sample(&mut rng)).collect())
            .collect())
    }

    /// Applies a `dotted.key=value` override. The value is parsed as JSON
    /// when possible and taken as a string otherwise; the key must already
    /// exist in the fully defaulted scenario.
    pub fn apply_override(&self, spec: &str) -> Result<Scenario, HarnessError> {
        let (key, raw) = spec
            .split_once('=')
            .ok_or_else(|| HarnessError::Usage(format!("override `{spec}` is not key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut doc = serde_json::to_value(self).expect("scenario serialises");
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = match slot {
                Value::Object(map) => map.get_mut(part),
                Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                _ => None,
            }
            .ok_or_else(|| HarnessError::Schema(format!("override: unknown key `{key}`")))?;
        }
        *slot = value;
        let s: Scenario =
            serde_json::from_value(doc).map_err(|e| HarnessError::Schema(format!("override `{key}`: {e}")))?;
        s.validate()?;
        Ok(s)
    }
}

/// Names of the bundled scenarios.
pub const BUNDLED: [&str; 5] = ["straight", "s_curve", "corridor_crossing", "sharp_turn_fov_loss", "obstacle_stop"];

pub fn bundled(name: &str) -> Option<Scenario> {
    match name {
        "straight" => Some(straight()),
        "s_curve" => Some(s_curve()),
        "corridor_crossing" => Some(corridor_crossing()),
        "sharp_turn_fov_loss" => Some(sharp_turn_fov_loss()),
        "obstacle_stop" => Some(obstacle_stop()),
        _ => None,
    }
}

const INIT: f64 = 5.0;
const LEADER_START: (f64, f64) = (1.6, 0.0);
const SCRIPT_DT: f64 = 0.1;

/// Scripts a walk along `curve(u)`, `u ∈ [0, 1]`, at constant `speed`,
/// sampled every `SCRIPT_DT` seconds and starting at `t0`.
fn walk(curve: impl Fn(f64) -> (f64, f64), speed: f64, t0: f64) -> Vec<TimedPose> {
    // dense chord-length table, then uniform time stamps along it
    let n = 4000;
    let pts: Vec<(f64, f64)> = (0..=n).map(|i| curve(i as f64 / n as f64)).collect();
    let mut cum = vec![0.0];
    for w in pts.windows(2) {
        let l = cum.last().unwrap() + (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
        cum.push(l);
    }
    let total = *cum.last().unwrap();
    let steps = (total / (speed * SCRIPT_DT)).ceil() as usize;
    let at = |s: f64| {
        let i = cum.partition_point(|c| *c <= s).clamp(1, n);
        let f = ((s - cum[i - 1]) / (cum[i] - cum[i - 1]).max(1e-12)).clamp(0.0, 1.0);
        let (a, b) = (pts[i - 1], pts[i]);
        ((a.0 + f * (b.0 - a.0)), (a.1 + f * (b.1 - a.1)), (b.1 - a.1).atan2(b.0 - a.0))
    };
    (0..=steps)
        .map(|k| {
            let s = (k as f64 * speed * SCRIPT_DT).min(total);
            let (x, y, th) = at(s);
            TimedPose::new(round6(t0 + k as f64 * SCRIPT_DT), round6(x), round6(y), round6(th))
        })
        .collect()
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Concatenates script pieces, dropping duplicate timestamps at the seams.
fn chain(parts: Vec<Vec<TimedPose>>) -> Vec<TimedPose> {
    let mut out: Vec<TimedPose> = Vec::new();
    for p in parts {
        for w in p {
            if out.last().is_none_or(|l| w.t > l.t) {
                out.push(w);
            }
        }
    }
    out
}

fn stand(x: f64, y: f64, theta: f64, t0: f64, t1: f64) -> Vec<TimedPose> {
    vec![TimedPose::new(t0, x, y, theta), TimedPose::new(t1, x, y, theta)]
}

fn leader(trajectory: Vec<TimedPose>) -> AgentSpec {
    AgentSpec {
        id: 1,
        role: Role::Leader,
        trajectory,
        body_radius: default_body_radius(),
        embedding_mean: None,
    }
}

fn pedestrian(id: u32, trajectory: Vec<TimedPose>) -> AgentSpec {
    AgentSpec {
        id,
        role: Role::Pedestrian,
        trajectory,
        body_radius: default_body_radius(),
        embedding_mean: None,
    }
}

fn base(name: &str, duration: f64, agents: Vec<AgentSpec>, obstacles: Vec<Obstacle>) -> Scenario {
    Scenario {
        name: name.into(),
        duration,
        dt: default_dt(),
        seed: 0,
        robot_start: Pose2D::identity(),
        agents,
        obstacles,
        sensors: SensorConfig::default(),
        embedding: EmbeddingConfig::default(),
        recognition: RecognitionConfig::default(),
        fusion: FusionConfig::default(),
        tracker: TrackerConfig::default(),
        path: PathConfig::default(),
        control: ControllerConfig::default(),
    }
}

fn wall(ax: f64, ay: f64, bx: f64, by: f64) -> Obstacle {
    Obstacle { a: [ax, ay], b: [bx, by] }
}

fn straight() -> Scenario {
    let (x0, y0) = LEADER_START;
    let w = walk(|u| (x0 + 12.0 * u, y0), 0.6, INIT);
    let end = *w.last().unwrap();
    let traj = chain(vec![stand(x0, y0, 0.0, 0.0, INIT), w, stand(end.x, end.y, 0.0, end.t + 0.1, end.t + 60.0)]);
    base("straight", 34.0, vec![leader(traj)], vec![])
}

/// One full sine period, about 15 m of walking.
fn s_curve() -> Scenario {
    let (x0, y0) = LEADER_START;
    let amp = 1.5;
    let span = 13.0;
    let w = walk(
        |u| (x0 + span * u, y0 + amp * (std::f64::consts::TAU * u).sin()),
        0.6,
        INIT,
    );
    let end = *w.last().unwrap();
    let traj = chain(vec![stand(x0, y0, 0.0, 0.0, INIT), w, stand(end.x, end.y, end.theta, end.t + 0.1, end.t + 60.0)]);
    base("s_curve", 38.0, vec![leader(traj)], vec![])
}

/// Corridor walk with a pedestrian crossing between robot and leader.
fn corridor_crossing() -> Scenario {
    let (x0, y0) = LEADER_START;
    let w = walk(|u| (x0 + 14.0 * u, y0), 0.6, INIT);
    let end = *w.last().unwrap();
    let traj = chain(vec![stand(x0, y0, 0.0, 0.0, INIT), w, stand(end.x, end.y, 0.0, end.t + 0.1, end.t + 60.0)]);
    // crosses x = 6 from the left wall to the right wall
    let t_cross = 13.0;
    let cross = walk(|u| (6.0, 1.7 - 3.4 * u), 0.9, t_cross);
    let cend = *cross.last().unwrap();
    let other = chain(vec![
        stand(6.0, 1.7, -std::f64::consts::FRAC_PI_2, 0.0, t_cross),
        cross,
        stand(cend.x, cend.y, cend.theta, cend.t + 0.1, cend.t + 60.0),
    ]);
    let walls = vec![wall(-1.0, 2.2, 18.0, 2.2), wall(-1.0, -2.2, 18.0, -2.2)];
    base("corridor_crossing", 38.0, vec![leader(traj), pedestrian(2, other)], walls)
}

/// Tight left turn that takes the leader out of the camera cone while a
/// bystander stands in view.
fn sharp_turn_fov_loss() -> Scenario {
    let (x0, y0) = LEADER_START;
    let corner = 6.0;
    let r = 0.4;
    let leg1 = walk(|u| (x0 + (corner - r - x0) * u, y0), 0.6, INIT);
    let t1 = leg1.last().unwrap().t;
    let arc = walk(
        |u| {
            let a = -std::f64::consts::FRAC_PI_2 + std::f64::consts::FRAC_PI_2 * u;
            (corner - r + r * a.cos(), y0 + r + r * a.sin())
        },
        0.6,
        t1,
    );
    let t2 = arc.last().unwrap().t;
    let leg2 = walk(|u| (corner, y0 + r + 7.0 * u), 0.6, t2);
    let end = *leg2.last().unwrap();
    let traj = chain(vec![
        stand(x0, y0, 0.0, 0.0, INIT),
        leg1,
        arc,
        leg2,
        stand(end.x, end.y, end.theta, end.t + 0.1, end.t + 60.0),
    ]);
    // stays in the camera cone while the robot rounds the corner
    let bystander = stand(corner + 1.0, y0 + 0.9, std::f64::consts::PI, 0.0, 60.0);
    base(
        "sharp_turn_fov_loss",
        36.0,
        vec![leader(traj), pedestrian(2, bystander)],
        vec![],
    )
}

/// A pedestrian steps onto the path behind the leader and stays there.
fn obstacle_stop() -> Scenario {
    let (x0, y0) = LEADER_START;
    let corner = 5.0;
    let r = 0.5;
    let leg1 = walk(|u| (x0 + (corner - r - x0) * u, y0), 0.6, INIT);
    let t1 = leg1.last().unwrap().t;
    let arc = walk(
        |u| {
            let a = -std::f64::consts::FRAC_PI_2 + std::f64::consts::FRAC_PI_2 * u;
            (corner - r + r * a.cos(), y0 + r + r * a.sin())
        },
        0.6,
        t1,
    );
    let t2 = arc.last().unwrap().t;
    let leg2 = walk(|u| (corner, y0 + r + 8.0 * u), 0.6, t2);
    let end = *leg2.last().unwrap();
    let traj = chain(vec![
        stand(x0, y0, 0.0, 0.0, INIT),
        leg1,
        arc,
        leg2,
        stand(end.x, end.y, end.theta, end.t + 0.1, end.t + 60.0),
    ]);
    let stop_x = 4.0;
    let t_in = 9.0;
    let step_in = walk(|u| (stop_x, -1.6 + 1.6 * u), 0.8, t_in);
    let other = chain(vec![
        stand(stop_x, -1.6, std::f64::consts::FRAC_PI_2, 0.0, t_in),
        step_in,
        stand(stop_x, 0.0, std::f64::consts::FRAC_PI_2, 0.0, 60.0),
    ]);
    base("obstacle_stop", 30.0, vec![leader(traj), pedestrian(2, other)], vec![])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = Scenario::from_json(
            r#"{"duration": 2.0, "agents": [{"id": 1, "role": "leader", "trajectory": [{"t": 0, "x": 1.5, "y": 0}]}]}"#,
        )
        .unwrap();
        assert_eq!(s.dt, 0.05);
        assert_eq!(s.control, ControllerConfig::default());
        assert_eq!(s.agents[0].body_radius, 0.25);
        assert_eq!(s.world_agents()[0].embedding_mean.len(), 64);
    }

    #[test]
    fn rejects_bad_input() {
        let agent = r#"{"id": 1, "role": "leader", "trajectory": [{"t": 0, "x": 1, "y": 0}]}"#;
        let e = Scenario::from_json(&format!(r#"{{"duration": 2, "dt": 0, "agents": [{agent}]}}"#)).unwrap_err();
        assert!(e.to_string().contains("dt"), "{e}");
        let e = Scenario::from_json(&format!(r#"{{"duration": 2, "bogus": 1, "agents": [{agent}]}}"#)).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let two = agent.replace("\"id\": 1", "\"id\": 2");
        let e = Scenario::from_json(&format!(r#"{{"duration": 2, "agents": [{agent}, {two}]}}"#)).unwrap_err();
        assert!(e.to_string().contains("exactly one leader"), "{e}");
        let e = Scenario::from_json(&format!(r#"{{"duration": 2, "agents": [{agent}], "control": {{"k_lat": 1, "kk": 2}}}}"#))
            .unwrap_err();
        assert!(e.to_string().contains("kk"), "{e}");
    }

    #[test]
    fn round_trip_is_identity() {
        for name in BUNDLED {
            let s = bundled(name).unwrap();
            s.validate().unwrap();
            let back = Scenario::from_json(&s.to_json()).unwrap();
            assert_eq!(back, s, "{name}");
        }
    }

    #[test]
    fn overrides() {
        let s = bundled("straight").unwrap();
        let o = s.apply_override("control.k_lat=2.5").unwrap();
        assert_eq!(o.control.k_lat, 2.5);
        let o = s.apply_override("seed=9").unwrap();
        assert_eq!(o.seed, 9);
        assert!(matches!(s.apply_override("control.nope=1"), Err(HarnessError::Schema(_))));
        assert!(matches!(s.apply_override("dt=-1"), Err(HarnessError::Schema(_))));
        assert!(matches!(s.apply_override("dt"), Err(HarnessError::Usage(_))));
    }

    #[test]
    fn generated_embeddings_depend_on_seed_and_id() {
        let s = bundled("corridor_crossing").unwrap();
        let a = s.world_agents();
        assert_ne!(a[0].embedding_mean, a[1].embedding_mean);
        assert_eq!(a, s.world_agents());
        let t = Scenario { seed: 1, ..s };
        assert_ne!(t.world_agents()[0].embedding_mean, a[0].embedding_mean);
    }

    #[test]
    fn scripts_are_monotone_and_paced() {
        for name in BUNDLED {
            let s = bundled(name).unwrap();
            for a in &s.agents {
                for w in a.trajectory.windows(2) {
                    let v = (w[1].x - w[0].x).hypot(w[1].y - w[0].y) / (w[1].t - w[0].t);
                    assert!(v <= 1.2, "{name} agent {} speed {v}", a.id);
                }
            }
        }
    }
}
