use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Point, Pose2D};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub v: f64,
    pub omega: f64,
}

impl ControlInput {
    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn stop() -> Self {
        Self::default()
    }
}

/// Forward-Euler unicycle update.
pub fn step_unicycle(s: &Pose2D, u: &ControlInput, dt: f64) -> Pose2D {
    debug_assert!(dt > 0.0);
    Pose2D::new(
        s.x + s.theta.cos() * dt * u.v,
        s.y + s.theta.sin() * dt * u.v,
        s.theta + dt * u.omega,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Leader,
    Pedestrian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedPose {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub theta: f64,
}

impl TimedPose {
    pub fn new(t: f64, x: f64, y: f64, theta: f64) -> Self {
        Self { t, x, y, theta }
    }

    pub fn pose(&self) -> Pose2D {
        Pose2D::new(self.x, self.y, self.theta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: AgentId,
    pub role: Role,
    pub trajectory: Vec<TimedPose>,
    pub body_radius: f64,
    pub embedding_mean: Vec<f64>,
}

impl Agent {
    /// Pose at time `t` by linear interpolation of the script; holds the
    /// first/last pose outside the scripted interval.
    pub fn pose_at(&self, t: f64) -> Pose2D {
        let traj = &self.trajectory;
        let first = traj[0];
        if t <= first.t {
            return first.pose();
        }
        let last = traj[traj.len() - 1];
        if t >= last.t {
            return last.pose();
        }
        // first index with timestamp > t
        let hi = traj.partition_point(|w| w.t <= t);
        let a = traj[hi - 1];
        let b = traj[hi];
        let f = (t - a.t) / (b.t - a.t);
        let dth = normalize_angle(b.theta - a.theta);
        Pose2D::new(
            a.x + f * (b.x - a.x),
            a.y + f * (b.y - a.y),
            a.theta + f * dth,
        )
    }
}

/// Static line-segment obstacle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl Obstacle {
    pub fn endpoints(&self) -> (Point, Point) {
        (Point::new(self.a[0], self.a[1]), Point::new(self.b[0], self.b[1]))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub time: f64,
    pub agents: Vec<Agent>,
    pub poses: Vec<Pose2D>,
    pub obstacles: Vec<Obstacle>,
}

impl WorldState {
    pub fn new(agents: Vec<Agent>, obstacles: Vec<Obstacle>, t0: f64) -> Self {
        let poses = agents.iter().map(|a| a.pose_at(t0)).collect();
        Self {
            time: t0,
            agents,
            poses,
            obstacles,
        }
    }

    pub fn advance(&mut self, dt: f64) {
        debug_assert!(dt > 0.0);
        self.set_time(self.time + dt);
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
        for (agent, pose) in self.agents.iter().zip(self.poses.iter_mut()) {
            *pose = agent.pose_at(t);
        }
    }

    pub fn leader_index(&self) -> Option<usize> {
        self.agents.iter().position(|a| a.role == Role::Leader)
    }

    pub fn index_of(&self, id: AgentId) -> Option<usize> {
        self.agents.iter().position(|a| a.id == id)
    }

    /// Agent disks as (center, radius, index).
    pub(crate) fn disks(&self) -> impl Iterator<Item = (Point, f64, usize)> + '_ {
        self.agents
            .iter()
            .zip(self.poses.iter())
            .enumerate()
            .map(|(i, (a, p))| (p.position(), a.body_radius, i))
    }
}
