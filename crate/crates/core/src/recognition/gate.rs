use serde::{Deserialize, Serialize};

use super::RecognitionState;
use crate::sim::BBox;

/// Drift-tolerance radius `d = t·s·(w/100)²` around the last valid bounding
/// box centroid.
pub fn drift_radius(t: f64, w: f64, s: f64) -> f64 {
    let q = w / 100.0;
    t * s * (q * q)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateDecision {
    Accept,
    RejectTooFar,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftGate {
    pub s: f64,
    /// Multiplies elapsed seconds before they enter the radius formula.
    /// 1000 measures `t` in milliseconds.
    pub time_scale: f64,
}

impl Default for DriftGate {
    fn default() -> Self {
        Self {
            s: 0.05,
            time_scale: 1000.0,
        }
    }
}

impl DriftGate {
    pub fn radius(&self, elapsed_s: f64, w: f64) -> f64 {
        drift_radius(elapsed_s.max(0.0) * self.time_scale, w, self.s)
    }
}

/// Gates against the centroid of the last valid box.
pub fn gate_detection(candidate: &BBox, state: &RecognitionState, now: f64, gate: &DriftGate) -> GateDecision {
    let last = state
        .last_bbox
        .expect("gate_detection requires a last valid bounding box");
    gate_detection_from(candidate, last.center(), state, now, gate)
}

/// Gates against an explicit reference centroid (e.g. the LIDAR-fused leader
/// position re-projected into the image); the radius still uses the last
/// valid box width and the time since the last valid detection.
pub fn gate_detection_from(
    candidate: &BBox,
    reference: (f64, f64),
    state: &RecognitionState,
    now: f64,
    gate: &DriftGate,
) -> GateDecision {
    let last = state
        .last_bbox
        .expect("gate_detection requires a last valid bounding box");
    let (cu, cv) = candidate.center();
    let dist = (cu - reference.0).hypot(cv - reference.1);
    let d = gate.radius(now - state.last_detection_time, last.w);
    if dist <= d {
        GateDecision::Accept
    } else {
        GateDecision::RejectTooFar
    }
}
