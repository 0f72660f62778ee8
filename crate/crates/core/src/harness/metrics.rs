use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::run::{RunLog, StepPhase};
use crate::control::SafetyKind;
use crate::fusion::FusionMode;
use crate::geometry::Point;

/// Distribution summary. `p95` is the nearest-rank percentile.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub count: usize,
    pub max: f64,
    pub p95: f64,
    pub rms: f64,
}

impl Distribution {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Self {
            count: n,
            max: s[n - 1],
            p95: s[rank - 1],
            rms: (s.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Identity {
    /// Steps with a fused measurement.
    pub target_steps: usize,
    /// Of those, steps whose measurement belongs to the leader.
    pub leader_steps: usize,
    pub precision: Option<f64>,
    /// First step after the bootstrap phase, if it ended.
    pub bootstrap_end: Option<usize>,
    pub after_bootstrap_target_steps: usize,
    pub after_bootstrap_wrong_steps: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub steps: usize,
    /// Robot-to-true-leader-footstep-polyline distance over following steps
    /// at which the robot has reached the start of that polyline.
    pub lateral: Distribution,
    pub tracker_rmse: Option<f64>,
    pub identity: Identity,
    /// Fraction of steps spent in each fusion mode.
    pub mode_occupancy: BTreeMap<String, f64>,
    /// Mean model probability over steps with an estimate.
    pub mean_mu: BTreeMap<String, f64>,
    /// Largest speed change between consecutive commands.
    pub max_dv: f64,
    /// Commands with `v = 0` and `ω ≠ 0`.
    pub omega_at_rest: usize,
    pub event_counts: BTreeMap<String, usize>,
    /// Longest continuous stretch with the leader outside the camera cone
    /// during the following phase, in seconds.
    pub longest_leader_out_of_fov: f64,
}

/// Closest-point distance to a polyline, and whether the closest point is
/// the very start of it with the query behind the first segment.
fn polyline_distance(p: &Point, line: &[Point]) -> (f64, bool) {
    if line.len() == 1 {
        return ((p - line[0]).norm(), true);
    }
    let mut best = (f64::INFINITY, false);
    for (i, w) in line.windows(2).enumerate() {
        let d = w[1] - w[0];
        let len2 = d.norm_squared();
        let u = if len2 > 0.0 { (p - w[0]).dot(&d) / len2 } else { 0.0 };
        let dist = (p - (w[0] + d * u.clamp(0.0, 1.0))).norm();
        if dist < best.0 {
            best = (dist, i == 0 && u <= 0.0);
        }
    }
    best
}

fn mode_name(m: FusionMode) -> String {
    format!("{m:?}")
}

pub fn compute_metrics(log: &RunLog) -> Metrics {
    let leader = log.leader_id;
    let steps = &log.steps;
    let mut m = Metrics {
        steps: steps.len(),
        ..Metrics::default()
    };

    let mut footsteps: Vec<Point> = Vec::new();
    for r in steps {
        let p = r.agents[&leader].position();
        if footsteps.last() != Some(&p) {
            footsteps.push(p);
        }
    }
    if !footsteps.is_empty() {
        let lateral: Vec<f64> = steps
            .iter()
            .filter(|r| r.phase == StepPhase::Following)
            .map(|r| polyline_distance(&r.robot.position(), &footsteps))
            .filter(|(_, before_start)| !before_start)
            .map(|(d, _)| d)
            .collect();
        m.lateral = Distribution::from_samples(&lateral);
    }

    let sq: Vec<f64> = steps
        .iter()
        .filter_map(|r| {
            let e = r.estimate.as_ref()?;
            Some((e.position() - r.agents[&leader].position()).norm_squared())
        })
        .collect();
    if !sq.is_empty() {
        m.tracker_rmse = Some((sq.iter().sum::<f64>() / sq.len() as f64).sqrt());
    }

    let id = &mut m.identity;
    id.bootstrap_end = steps
        .iter()
        .position(|r| r.phase == StepPhase::Following && r.mode != FusionMode::Bootstrap);
    for r in steps.iter().filter(|r| r.measurement.is_some()) {
        id.target_steps += 1;
        let ok = r.target_truth == Some(leader);
        id.leader_steps += ok as usize;
        if id.bootstrap_end.is_some_and(|b| r.k >= b) {
            id.after_bootstrap_target_steps += 1;
            id.after_bootstrap_wrong_steps += !ok as usize;
        }
    }
    if id.target_steps > 0 {
        id.precision = Some(id.leader_steps as f64 / id.target_steps as f64);
    }

    if !steps.is_empty() {
        let mut occ: BTreeMap<String, f64> = BTreeMap::new();
        for r in steps {
            *occ.entry(mode_name(r.mode)).or_default() += 1.0;
        }
        for v in occ.values_mut() {
            *v /= steps.len() as f64;
        }
        m.mode_occupancy = occ;
    }

    let mut mu_sum: BTreeMap<String, f64> = BTreeMap::new();
    let mut n_mu = 0usize;
    for e in steps.iter().filter_map(|r| r.estimate.as_ref()) {
        n_mu += 1;
        for (k, v) in &e.mu {
            *mu_sum.entry(k.clone()).or_default() += v;
        }
    }
    m.mean_mu = mu_sum.into_iter().map(|(k, v)| (k, v / n_mu as f64)).collect();

    let mut v_prev = 0.0;
    for r in steps {
        m.max_dv = m.max_dv.max((r.command.v - v_prev).abs());
        v_prev = r.command.v;
        if r.command.v == 0.0 && r.command.omega != 0.0 {
            m.omega_at_rest += 1;
        }
    }

    for kind in [SafetyKind::SlowDown, SafetyKind::Stop, SafetyKind::SoundAlert] {
        let n = log.events.iter().filter(|e| e.kind == kind).count();
        m.event_counts.insert(format!("{kind:?}"), n);
    }

    let dt = log.scenario.dt;
    let mut run = 0usize;
    let mut longest = 0usize;
    for r in steps.iter().filter(|r| r.phase == StepPhase::Following) {
        run = if r.leader_in_fov { 0 } else { run + 1 };
        longest = longest.max(run);
    }
    m.longest_leader_out_of_fov = longest as f64 * dt;
    m
}
