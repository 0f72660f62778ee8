//! Leader identification: bootstrap over the initialisation window, online
//! KNN with positive feedback, and the drift-tolerance gate.

mod gate;
mod image_tracker;
mod knn;

use std::io::BufRead;
use std::path::Path;

pub use gate::{drift_radius, gate_detection, gate_detection_from, DriftGate, GateDecision};
pub use image_tracker::{ImageTracker, TrackedBox};
pub use knn::{Classification, KnnModel, Label};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{BBox, Detection};

#[derive(Debug, Error)]
pub enum RecognitionError {
    #[error("recogniser has no stored samples")]
    Uninitialised,
    #[error("initialisation failed: {with_detections} of {frames} frames had detections, {required} required")]
    InsufficientDetections {
        frames: usize,
        with_detections: usize,
        required: usize,
    },
    #[error("negative pool is empty")]
    EmptyNegativePool,
    #[error("negative pool {path}: line {line}: {message}")]
    PoolFormat {
        path: String,
        line: usize,
        message: String,
    },
    #[error("negative pool {path}: {source}")]
    PoolIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognitionConfig {
    pub k: usize,
    /// Length of the initialisation window (seconds).
    pub init_window: f64,
    /// Fraction of init frames that must contain a detection.
    pub init_min_fraction: f64,
    pub negative_cap: usize,
    /// Frames per image-tracker cycle before re-detection.
    pub frames_per_cycle: usize,
    pub gate: DriftGate,
    /// Per-frame random-walk drift of the simulated image tracker (pixels).
    pub tracker_drift_px: f64,
}

impl Default for RecognitionConfig {
    fn default() -> Self {
        Self {
            k: 5,
            init_window: 5.0,
            init_min_fraction: 0.8,
            negative_cap: 500,
            frames_per_cycle: 10,
            gate: DriftGate::default(),
            tracker_drift_px: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Initialising,
    Following,
    Fault,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecognitionState {
    pub phase: Phase,
    pub last_bbox: Option<BBox>,
    pub last_detection_time: f64,
    pub init_deadline: f64,
}

impl RecognitionState {
    pub fn initialising(start: f64, window: f64) -> Self {
        Self {
            phase: Phase::Initialising,
            last_bbox: None,
            last_detection_time: start,
            init_deadline: start + window,
        }
    }

    pub fn start_following(&mut self, last: &Detection) {
        self.phase = Phase::Following;
        self.last_bbox = Some(last.bbox);
        self.last_detection_time = last.timestamp;
    }
}

/// Largest-area detection of a frame (first one wins on equal area).
pub fn largest_detection(frame: &[Detection]) -> Option<&Detection> {
    frame.iter().fold(None, |best: Option<&Detection>, d| match best {
        Some(b) if b.bbox.area() >= d.bbox.area() => Some(b),
        _ => Some(d),
    })
}

/// Builds the initial model: the largest box of each frame is a positive, and
/// one negative is drawn from the pool per positive.
pub fn run_initialisation<R: Rng>(
    frames: &[Vec<Detection>],
    negative_pool: &[Vec<f64>],
    cfg: &RecognitionConfig,
    rng: &mut R,
) -> Result<KnnModel, RecognitionError> {
    if negative_pool.is_empty() {
        return Err(RecognitionError::EmptyNegativePool);
    }
    let with_detections = frames.iter().filter(|f| !f.is_empty()).count();
    let required = (cfg.init_min_fraction * frames.len() as f64).ceil() as usize;
    if frames.is_empty() || with_detections < required.max(1) {
        return Err(RecognitionError::InsufficientDetections {
            frames: frames.len(),
            with_detections,
            required: required.max(1),
        });
    }
    let mut model = KnnModel::new(cfg.k, cfg.negative_cap.max(with_detections));
    for frame in frames {
        if let Some(det) = largest_detection(frame) {
            model.add_positive(det.embedding.clone());
            let j = rng.gen_range(0..negative_pool.len());
            model.add_negative(negative_pool[j].clone());
        }
    }
    Ok(model)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FollowingOutcome {
    pub leader: Option<Detection>,
    pub rejected_by_gate: usize,
    pub classified_not_leader: usize,
}

/// One detection cycle while following: gate, classify, and feed the
/// results back into the model. Gate-rejected detections never touch the
/// model.
pub fn following_step(
    detections: &[Detection],
    state: &mut RecognitionState,
    model: &mut KnnModel,
    fused_feedback: Option<(f64, f64)>,
    now: f64,
    cfg: &RecognitionConfig,
) -> Result<FollowingOutcome, RecognitionError> {
    let mut outcome = FollowingOutcome {
        leader: None,
        rejected_by_gate: 0,
        classified_not_leader: 0,
    };
    if state.phase != Phase::Following {
        return Ok(outcome);
    }
    let reference = match (fused_feedback, state.last_bbox) {
        (Some(r), _) => r,
        (None, Some(b)) => b.center(),
        (None, None) => return Ok(outcome),
    };
    let mut best: Option<(f64, &Detection)> = None;
    let mut rejected_negatives = Vec::new();
    for det in detections {
        if gate_detection_from(&det.bbox, reference, state, now, &cfg.gate) == GateDecision::RejectTooFar {
            outcome.rejected_by_gate += 1;
            continue;
        }
        let c = model.classify(&det.embedding)?;
        match c.label {
            Label::Leader => {
                if best.is_none_or(|(m, _)| c.margin > m) {
                    best = Some((c.margin, det));
                }
            }
            Label::NotLeader => {
                outcome.classified_not_leader += 1;
                rejected_negatives.push(det.embedding.clone());
            }
        }
    }
    for e in rejected_negatives {
        model.add_negative(e);
    }
    if let Some((_, det)) = best {
        model.add_positive(det.embedding.clone());
        state.last_bbox = Some(det.bbox);
        state.last_detection_time = now;
        outcome.leader = Some(det.clone());
    }
    Ok(outcome)
}

/// Reads newline-delimited JSON arrays of embeddings. Blank lines are
/// skipped.
pub fn load_negative_pool(path: &Path) -> Result<Vec<Vec<f64>>, RecognitionError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| RecognitionError::PoolIo {
        path: display.clone(),
        source,
    })?;
    let mut pool = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| RecognitionError::PoolIo {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = serde_json::from_str(&line).map_err(|e| RecognitionError::PoolFormat {
            path: display.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(first) = pool.first().map(|p: &Vec<f64>| p.len()) {
            if first != v.len() {
                return Err(RecognitionError::PoolFormat {
                    path: display,
                    line: i + 1,
                    message: format!("dimension {} differs from {}", v.len(), first),
                });
            }
        }
        pool.push(v);
    }
    Ok(pool)
}

pub fn write_negative_pool(path: &Path, pool: &[Vec<f64>]) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in pool {
        writeln!(f, "{}", serde_json::to_string(e).expect("finite embedding"))?;
    }
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::AgentId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn det(id: u32, u: f64, w: f64, emb: Vec<f64>) -> Detection {
        Detection {
            timestamp: 0.0,
            bbox: BBox::from_center(u, 240.0, w, 3.0 * w),
            centroid_c: [0.0, 0.1, 2.0],
            embedding: emb,
            agent_truth: AgentId(id),
        }
    }

    fn pool() -> Vec<Vec<f64>> {
        (0..20).map(|i| vec![10.0 + i as f64, -10.0]).collect()
    }

    #[test]
    fn one_positive_per_frame() {
        let frames: Vec<Vec<Detection>> = (0..30).map(|_| vec![det(1, 320.0, 100.0, vec![0.0, 0.0])]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = run_initialisation(&frames, &pool(), &RecognitionConfig::default(), &mut rng).unwrap();
        assert_eq!(m.positive_count(), 30);
        assert_eq!(m.negative_count(), 30);
    }

    #[test]
    fn nearer_agent_supplies_positives() {
        // oracle: pin-hole width f*2r/z, so the nearer agent always has the
        // larger box
        let f = 462.0;
        let frames: Vec<Vec<Detection>> = (0..10)
            .map(|i| {
                let z_leader = 1.5 + 0.01 * i as f64;
                let z_other = 2.5;
                vec![
                    det(2, 200.0, f * 0.5 / z_other, vec![5.0, 5.0]),
                    det(1, 320.0, f * 0.5 / z_leader, vec![0.0, 0.0]),
                ]
            })
            .collect();
        for f in &frames {
            assert_eq!(largest_detection(f).unwrap().agent_truth, AgentId(1));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = run_initialisation(&frames, &pool(), &RecognitionConfig::default(), &mut rng).unwrap();
        assert_eq!(m.classify(&[0.0, 0.0]).unwrap().label, Label::Leader);
    }

    #[test]
    fn empty_pool_is_an_error() {
        let frames = vec![vec![det(1, 320.0, 100.0, vec![0.0])]];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = run_initialisation(&frames, &[], &RecognitionConfig::default(), &mut rng);
        assert!(matches!(r, Err(RecognitionError::EmptyNegativePool)));
    }

    #[test]
    fn too_few_detections_fails() {
        let mut frames: Vec<Vec<Detection>> = vec![vec![]; 10];
        frames[0].push(det(1, 320.0, 100.0, vec![0.0, 0.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = run_initialisation(&frames, &pool(), &RecognitionConfig::default(), &mut rng);
        assert!(matches!(r, Err(RecognitionError::InsufficientDetections { required: 8, .. })));
    }

    fn following_setup() -> (RecognitionState, KnnModel) {
        let mut m = KnnModel::new(3, 100);
        for i in 0..5 {
            m.add_positive(vec![0.0 + 0.01 * i as f64, 0.0]);
            m.add_negative(vec![10.0, 10.0 + 0.01 * i as f64]);
        }
        let mut st = RecognitionState::initialising(0.0, 5.0);
        st.start_following(&det(1, 320.0, 150.0, vec![0.0, 0.0]));
        (st, m)
    }

    #[test]
    fn unambiguous_leader_grows_positives() {
        let (mut st, mut m) = following_setup();
        let dets = vec![det(1, 325.0, 150.0, vec![0.02, 0.01])];
        let out = following_step(&dets, &mut st, &mut m, None, 0.5, &RecognitionConfig::default()).unwrap();
        assert_eq!(out.leader.unwrap().agent_truth, AgentId(1));
        assert_eq!(m.positive_count(), 6);
        assert_eq!(st.last_detection_time, 0.5);
    }

    #[test]
    fn distractor_alone_yields_no_leader() {
        let (mut st, mut m) = following_setup();
        let dets = vec![det(2, 330.0, 150.0, vec![9.0, 9.5])];
        let out = following_step(&dets, &mut st, &mut m, None, 0.5, &RecognitionConfig::default()).unwrap();
        assert!(out.leader.is_none());
        assert_eq!(out.classified_not_leader, 1);
        assert_eq!(m.negative_count(), 6);
    }

    #[test]
    fn larger_margin_wins() {
        let (mut st, mut m) = following_setup();
        m.add_negative(vec![0.6, 0.0]);
        // candidate a: 3 leader votes (margin 0.5); candidate b near the
        // stray negative: 2 leader votes (margin 1/6)
        let a = det(1, 322.0, 150.0, vec![0.01, 0.0]);
        let b = det(3, 318.0, 150.0, vec![0.55, 0.0]);
        let ca = m.classify(&a.embedding).unwrap();
        let cb = m.classify(&b.embedding).unwrap();
        assert!(ca.label == Label::Leader && cb.label == Label::Leader && ca.margin > cb.margin);
        let out = following_step(&[b, a], &mut st, &mut m, None, 0.5, &RecognitionConfig::default()).unwrap();
        assert_eq!(out.leader.unwrap().agent_truth, AgentId(1));
    }

    #[test]
    fn gate_rejection_leaves_model_untouched() {
        let (mut st, mut m) = following_setup();
        let before = m.clone();
        let far = det(1, 620.0, 150.0, vec![0.0, 0.0]);
        let out = following_step(&[far], &mut st, &mut m, None, 0.05, &RecognitionConfig::default()).unwrap();
        assert_eq!(out.rejected_by_gate, 1);
        assert!(out.leader.is_none());
        assert_eq!(m, before);
    }

    #[test]
    fn feedback_moves_the_gate_reference() {
        let (mut st, mut m) = following_setup();
        let moved = det(1, 520.0, 150.0, vec![0.0, 0.0]);
        let cfg = RecognitionConfig::default();
        let out = following_step(std::slice::from_ref(&moved), &mut st, &mut m, None, 0.5, &cfg).unwrap();
        assert!(out.leader.is_none());
        let out = following_step(&[moved], &mut st, &mut m, Some((515.0, 240.0)), 0.5, &cfg).unwrap();
        assert!(out.leader.is_some());
    }

    #[test]
    fn pool_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pool.ndjson");
        let pool = vec![vec![0.5, -1.25], vec![3.0, 4.0]];
        write_negative_pool(&p, &pool).unwrap();
        assert_eq!(load_negative_pool(&p).unwrap(), pool);
        std::fs::write(&p, "[1.0, 2.0]\n[1.0]\n").unwrap();
        assert!(matches!(load_negative_pool(&p), Err(RecognitionError::PoolFormat { line: 2, .. })));
    }
}
