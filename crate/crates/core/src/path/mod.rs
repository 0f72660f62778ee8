//! Leader footsteps → continuous-curvature path.
//!
//! Admission threshold, LOESS smoothing, uniform arc-length resampling and
//! a G2 clothoid spline, rebuilt incrementally as points arrive.

mod clothoid;
mod fresnel;
mod loess;
mod resample;
mod spline;

pub use clothoid::{clothoid_g1_fit, xy_integrals, ClothoidSegment};
pub use fresnel::{fresnel, SERIES_LIMIT};
pub use loess::{chord_parameter, loess_smooth, neighbourhood_size, tricube};
pub use resample::resample_uniform;
pub use spline::{
    build_anchored_g2, build_g2_spline, build_g2_spline_with, eval_spline, Anchor, ClothoidSpline, Continuity,
    G2Options, SplineSample,
};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PathError {
    #[error("coincident endpoints")]
    DegenerateChord,
    #[error("G1 fit did not converge (residual {residual:e})")]
    G1NoConvergence { residual: f64 },
    #[error("G2 spline did not converge (max joint mismatch {max_mismatch:e})")]
    G2NoConvergence { max_mismatch: f64 },
    #[error("need at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedPoint {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl TimedPoint {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathDataset {
    pub points: Vec<TimedPoint>,
}

impl PathDataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Point> {
        self.points.iter().map(TimedPoint::point).collect()
    }
}

/// Appends `candidate` when the dataset is empty or the candidate lies
/// more than `epsilon_d` from the last admitted point.
pub fn admit_point(candidate: TimedPoint, dataset: &mut PathDataset, epsilon_d: f64) -> bool {
    let ok = dataset
        .points
        .last()
        .is_none_or(|last| (candidate.point() - last.point()).norm() > epsilon_d);
    if ok {
        dataset.points.push(candidate);
    }
    ok
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    pub epsilon_d: f64,
    pub span: f64,
    pub spacing: f64,
    /// Trailing raw points re-smoothed on each admission.
    pub window: usize,
    /// Waypoints kept free behind the first changed waypoint.
    pub freeze_margin: usize,
    pub g2_tol: f64,
    pub g2_max_iter: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            epsilon_d: 0.05,
            span: 0.3,
            spacing: 0.5,
            window: 20,
            freeze_margin: 2,
            g2_tol: 1e-9,
            g2_max_iter: 50,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStats {
    pub admitted: usize,
    pub rebuilds: usize,
    pub fresh_builds: usize,
    pub failed_builds: usize,
    /// Admissions that reversed the direction of travel.
    pub backtracks: usize,
}

/// Outcome of feeding one estimate to the builder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathUpdate {
    Rejected,
    Admitted,
    Rebuilt,
    /// Admitted, but the spline solve failed; the previous spline stays.
    BuildFailed,
}

/// Incremental path reconstruction.
///
/// Only the last `window` raw points are re-smoothed, so every waypoint
/// before the first changed one is bit-identical to the previous build and
/// its spline segments stay frozen. The re-fit starts `freeze_margin`
/// waypoints earlier and joins the frozen prefix with G2 continuity.
/// Published splines are immutable snapshots.
#[derive(Clone, Debug)]
pub struct PathBuilder {
    cfg: PathConfig,
    dataset: PathDataset,
    smoothed: Vec<Point>,
    waypoints: Vec<Point>,
    spline: Option<Arc<ClothoidSpline>>,
    /// Index of the segment that starts at each waypoint.
    node_segment: Vec<usize>,
    /// Segments carried over unchanged into the latest spline.
    frozen: usize,
    version: u64,
    stats: PathStats,
}

impl PathBuilder {
    pub fn new(cfg: PathConfig) -> Self {
        Self {
            cfg,
            dataset: PathDataset::default(),
            smoothed: Vec::new(),
            waypoints: Vec::new(),
            spline: None,
            node_segment: Vec::new(),
            frozen: 0,
            version: 0,
            stats: PathStats::default(),
        }
    }

    pub fn config(&self) -> &PathConfig {
        &self.cfg
    }

    pub fn dataset(&self) -> &PathDataset {
        &self.dataset
    }

    pub fn smoothed(&self) -> &[Point] {
        &self.smoothed
    }

    pub fn waypoints(&self) -> &[Point] {
        &self.waypoints
    }

    pub fn spline(&self) -> Option<Arc<ClothoidSpline>> {
        self.spline.clone()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn stats(&self) -> PathStats {
        self.stats
    }

    /// Leading segments of the current spline copied verbatim from the
    /// previous one; zero after a fresh build.
    pub fn frozen_segments(&self) -> usize {
        self.frozen
    }

    pub fn push(&mut self, p: Point, t: f64) -> PathUpdate {
        let n = self.dataset.len();
        let prev_dir = (n >= 2).then(|| self.dataset.points[n - 1].point() - self.dataset.points[n - 2].point());
        if !admit_point(TimedPoint { x: p.x, y: p.y, t }, &mut self.dataset, self.cfg.epsilon_d) {
            return PathUpdate::Rejected;
        }
        self.stats.admitted += 1;
        if let Some(d) = prev_dir {
            if d.dot(&(p - self.dataset.points[n - 1].point())) < 0.0 {
                self.stats.backtracks += 1;
            }
        }
        self.resmooth();
        let mut waypoints = resample_uniform(&self.smoothed, self.cfg.spacing);
        if waypoints.len() > 2 {
            let k = waypoints.len();
            if (waypoints[k - 1] - waypoints[k - 2]).norm() < 0.5 * self.cfg.spacing {
                waypoints.pop();
            }
        }
        if waypoints.len() < 2 {
            self.waypoints = waypoints;
            return PathUpdate::Admitted;
        }
        match self.rebuild(&waypoints) {
            Ok((spline, node_segment, frozen)) => {
                self.stats.rebuilds += 1;
                if frozen == 0 {
                    self.stats.fresh_builds += 1;
                }
                self.frozen = frozen;
                self.waypoints = waypoints;
                self.node_segment = node_segment;
                self.spline = Some(Arc::new(spline));
                self.version += 1;
                PathUpdate::Rebuilt
            }
            Err(_) => {
                self.stats.failed_builds += 1;
                PathUpdate::BuildFailed
            }
        }
    }

    fn resmooth(&mut self) {
        let raw = self.dataset.positions();
        let n = raw.len();
        let start = n.saturating_sub(self.cfg.window);
        let tail = loess_smooth(&raw[start..], self.cfg.span);
        self.smoothed.truncate(start);
        self.smoothed.extend(tail);
    }

    fn g2_options(&self) -> G2Options {
        G2Options {
            tol: self.cfg.g2_tol,
            max_iter: self.cfg.g2_max_iter,
        }
    }

    fn fresh(&self, waypoints: &[Point]) -> Result<(ClothoidSpline, Vec<usize>, usize), PathError> {
        let spline = build_g2_spline_with(waypoints, &self.g2_options())?;
        Ok((spline, (0..waypoints.len()).collect(), 0))
    }

    /// Returns the spline, the waypoint → segment map and the frozen segment count.
    fn rebuild(&self, waypoints: &[Point]) -> Result<(ClothoidSpline, Vec<usize>, usize), PathError> {
        let Some(old) = &self.spline else {
            return self.fresh(waypoints);
        };
        let common = self.waypoints.iter().zip(waypoints).take_while(|(a, b)| a == b).count();
        let common = common.min(self.node_segment.len());
        let anchor = common.saturating_sub(1 + self.cfg.freeze_margin);
        if anchor == 0 {
            return self.fresh(waypoints);
        }
        let first_new = self.node_segment[anchor];
        let seg = &old.segments[first_new];
        let a = Anchor {
            theta: seg.theta0,
            kappa: seg.kappa0,
        };
        let tail = match build_anchored_g2(&waypoints[anchor..], a, &self.g2_options()) {
            Ok(t) => t,
            Err(_) => return self.fresh(waypoints),
        };
        let mut segments = old.segments[..first_new].to_vec();
        segments.extend(tail);
        let mut node_segment = self.node_segment[..=anchor].to_vec();
        // the knot adds one segment inside the first re-fit span
        node_segment.extend((anchor + 1..waypoints.len()).map(|i| first_new + 1 + (i - anchor)));
        node_segment.truncate(waypoints.len());
        Ok((ClothoidSpline { segments }, node_segment, first_new))
    }
}
