//! G2 clothoid splines through waypoints.
//!
//! One clothoid per span leaves a G2 spline only two degrees of freedom,
//! so the end conditions decide the shape. A fresh build makes the first
//! and last spans circular arcs (`dκ = 0`); the interior headings are then
//! fixed by curvature continuity and found by Newton's method.
//!
//! An anchored build continues a frozen prefix whose end heading and
//! curvature are given. Imposing both at the start would turn the solve
//! into a forward shooting problem that amplifies curvature errors span by
//! span. Instead, the first span is split at a knot on its chord bisector,
//! and the knot offset is the extra unknown that absorbs the anchor
//! curvature. The far end keeps the circular-arc condition.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::clothoid::{clothoid_g1_fit, ClothoidSegment};
use super::PathError;
use crate::geometry::{normalize_angle, Point, Pose2D};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClothoidSpline {
    pub segments: Vec<ClothoidSegment>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplineSample {
    pub pose: Pose2D,
    pub kappa: f64,
    /// `s` lay outside `[0, L]` and was clamped.
    pub clamped: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Continuity {
    pub position: f64,
    pub heading: f64,
    pub curvature: f64,
}

impl ClothoidSpline {
    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn start_pose(&self) -> Option<Pose2D> {
        self.segments.first().map(|s| s.pose_at(0.0))
    }

    pub fn end_point(&self) -> Option<Point> {
        self.segments.last().map(|s| s.end())
    }

    /// Arc length at the start of each segment.
    pub fn offsets(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let o = acc;
                acc += s.length;
                o
            })
            .collect()
    }

    /// Worst position, heading and curvature mismatch over all joints.
    pub fn continuity(&self) -> Continuity {
        let mut c = Continuity {
            position: 0.0,
            heading: 0.0,
            curvature: 0.0,
        };
        for w in self.segments.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            c.position = c.position.max((a.end() - b.start()).norm());
            c.heading = c.heading.max(normalize_angle(a.theta_at(a.length) - b.theta0).abs());
            c.curvature = c.curvature.max((a.kappa_end() - b.kappa0).abs());
        }
        c
    }
}

pub fn eval_spline(spline: &ClothoidSpline, s: f64) -> SplineSample {
    assert!(!spline.is_empty(), "empty spline");
    let total = spline.total_length();
    let clamped = !(0.0..=total).contains(&s);
    let s = s.clamp(0.0, total);
    let offsets = spline.offsets();
    let i = offsets.partition_point(|o| *o <= s).saturating_sub(1);
    let seg = &spline.segments[i];
    let local = (s - offsets[i]).clamp(0.0, seg.length);
    SplineSample {
        pose: seg.pose_at(local),
        kappa: seg.kappa_at(local),
        clamped,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct G2Options {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for G2Options {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 50,
        }
    }
}

fn chord_angle(a: Point, b: Point) -> f64 {
    (b.y - a.y).atan2(b.x - a.x)
}

/// Heading of the bisector of the two chords meeting at `b`.
fn bisector(a: Point, b: Point, c: Point) -> f64 {
    let u = (b - a).normalize() + (c - b).normalize();
    if u.norm() < 1e-12 {
        chord_angle(a, b)
    } else {
        u.y.atan2(u.x)
    }
}

/// `2φ − θ` for chord direction φ: the heading at either end of a
/// circular arc over the chord, given the heading at the other end.
fn mirror(a: Point, b: Point, theta_a: f64) -> f64 {
    let phi = chord_angle(a, b);
    phi + normalize_angle(phi - theta_a)
}

fn collinear(points: &[Point]) -> bool {
    let (a, b) = (points[0], points[points.len() - 1]);
    let d = (b - a).normalize();
    points.windows(2).all(|w| {
        let e = w[1] - w[0];
        (d.x * e.y - d.y * e.x).abs() <= 1e-12 * e.norm().max(1.0) && d.dot(&e) > 0.0
    })
}

fn fit_chain(points: &[Point], headings: &[f64]) -> Result<Vec<ClothoidSegment>, PathError> {
    points
        .windows(2)
        .zip(headings.windows(2))
        .map(|(p, h)| clothoid_g1_fit(p[0], h[0], p[1], h[1]))
        .collect()
}

/// Square nonlinear system in the unknown vector `u`; `assemble` returns the
/// segments and the joint residuals.
fn solve<F>(u0: DVector<f64>, opts: &G2Options, assemble: F) -> Result<Vec<ClothoidSegment>, PathError>
where
    F: Fn(&DVector<f64>) -> Result<(Vec<ClothoidSegment>, DVector<f64>), PathError>,
{
    let m = u0.len();
    let mut u = u0;
    let (mut segs, mut r) = assemble(&u)?;
    for _ in 0..opts.max_iter {
        if r.amax() <= opts.tol {
            return Ok(segs);
        }
        let h = 1e-7;
        let mut jac = DMatrix::zeros(m, m);
        for j in 0..m {
            let mut up = u.clone();
            let mut um = u.clone();
            up[j] += h;
            um[j] -= h;
            let rp = assemble(&up)?.1;
            let rm = assemble(&um)?.1;
            jac.set_column(j, &((rp - rm) / (2.0 * h)));
        }
        let Some(step) = jac.lu().solve(&(-&r)) else {
            break;
        };
        let norm0 = r.norm();
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda > 1e-4 {
            let cand = &u + &step * lambda;
            if let Ok((s, rc)) = assemble(&cand) {
                if rc.norm() < norm0 {
                    u = cand;
                    segs = s;
                    r = rc;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if r.amax() <= opts.tol {
        Ok(segs)
    } else {
        Err(PathError::G2NoConvergence { max_mismatch: r.amax() })
    }
}

/// Fresh G2 spline through `waypoints` with circular end spans.
pub fn build_g2_spline(waypoints: &[Point]) -> Result<ClothoidSpline, PathError> {
    build_g2_spline_with(waypoints, &G2Options::default())
}

pub fn build_g2_spline_with(waypoints: &[Point], opts: &G2Options) -> Result<ClothoidSpline, PathError> {
    let n = waypoints.len();
    if n < 2 {
        return Err(PathError::TooFewWaypoints(n));
    }
    if n == 2 || collinear(waypoints) {
        let theta = chord_angle(waypoints[0], waypoints[n - 1]);
        return Ok(ClothoidSpline {
            segments: fit_chain(waypoints, &vec![theta; n])?,
        });
    }
    let u0 = DVector::from_iterator(n - 2, (1..n - 1).map(|i| bisector(waypoints[i - 1], waypoints[i], waypoints[i + 1])));
    let headings = |u: &DVector<f64>| {
        let mut h = Vec::with_capacity(n);
        h.push(0.0);
        h.extend(u.iter().copied());
        h.push(0.0);
        h[0] = mirror(waypoints[0], waypoints[1], h[1]);
        h[n - 1] = mirror(waypoints[n - 2], waypoints[n - 1], h[n - 2]);
        h
    };
    let segments = solve(u0, opts, |u| {
        let segs = fit_chain(waypoints, &headings(u))?;
        let r = DVector::from_iterator(n - 2, segs.windows(2).map(|w| w[0].kappa_end() - w[1].kappa0));
        Ok((segs, r))
    })?;
    Ok(ClothoidSpline { segments })
}

/// Anchor state a continuation must join with G2 continuity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    pub theta: f64,
    pub kappa: f64,
}

/// Continue from `waypoints[0]` with the anchor heading and curvature.
/// The first span is split at a knot on its chord bisector, so the result
/// has one more segment than spans.
pub fn build_anchored_g2(waypoints: &[Point], anchor: Anchor, opts: &G2Options) -> Result<Vec<ClothoidSegment>, PathError> {
    let n = waypoints.len();
    if n < 2 {
        return Err(PathError::TooFewWaypoints(n));
    }
    let (p0, p1) = (waypoints[0], waypoints[1]);
    let chord = p1 - p0;
    if chord.norm() < 1e-12 {
        return Err(PathError::DegenerateChord);
    }
    let normal = Vector2::new(-chord.y, chord.x).normalize();
    let mid = p0 + chord * 0.5;
    let knot = |d: f64| mid + normal * d;

    // u = [d, θ_knot, θ_1, …, θ_{n-2}]; θ_{n-1} follows from the arc rule.
    let m = n;
    let mut u0 = DVector::zeros(m);
    u0[1] = chord_angle(p0, p1);
    for i in 1..n - 1 {
        u0[i + 1] = bisector(waypoints[i - 1], waypoints[i], waypoints[i + 1]);
    }
    let chain = |u: &DVector<f64>| -> (Vec<Point>, Vec<f64>) {
        let mut pts = Vec::with_capacity(n + 1);
        pts.push(p0);
        pts.push(knot(u[0]));
        pts.extend_from_slice(&waypoints[1..]);
        let mut h = Vec::with_capacity(n + 1);
        h.push(anchor.theta);
        h.extend(u.iter().skip(1).copied());
        let k = pts.len();
        let last = mirror(pts[k - 2], pts[k - 1], h[k - 2]);
        h.push(last);
        (pts, h)
    };
    solve(u0, opts, |u| {
        let (pts, h) = chain(u);
        let segs = fit_chain(&pts, &h)?;
        let mut r = DVector::zeros(m);
        r[0] = segs[0].kappa0 - anchor.kappa;
        for (j, w) in segs.windows(2).enumerate() {
            r[j + 1] = w[0].kappa_end() - w[1].kappa0;
        }
        Ok((segs, r))
    })
}
