//! Planar poses, rigid transforms and frame-to-frame point projection.

use std::f64::consts::{PI, TAU};

use nalgebra::{Point2, Rotation2, Vector2};
use serde::{Deserialize, Serialize};

pub type Point = Point2<f64>;

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta % TAU;
    if a <= -PI {
        a += TAU;
    } else if a > PI {
        a -= TAU;
    }
    a
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    /// The transform mapping points expressed in this pose's local frame to
    /// the parent frame.
    pub fn as_transform(&self) -> FrameTransform {
        FrameTransform::new(Vector2::new(self.x, self.y), self.theta)
    }

    /// Pose of `other` expressed in the frame of `self`.
    pub fn relative(&self, other: &Pose2D) -> Pose2D {
        let p = self.as_transform().inverse().apply(&other.position());
        Pose2D::new(p.x, p.y, other.theta - self.theta)
    }
}

impl Default for Pose2D {
    fn default() -> Self {
        Self::identity()
    }
}

/// Rigid planar transform: `p ↦ R(rotation)·p + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameTransform {
    pub translation: Vector2<f64>,
    pub rotation: f64,
}

impl FrameTransform {
    pub fn new(translation: Vector2<f64>, rotation: f64) -> Self {
        Self {
            translation,
            rotation: normalize_angle(rotation),
        }
    }

    pub fn identity() -> Self {
        Self::new(Vector2::zeros(), 0.0)
    }

    pub fn apply(&self, p: &Point) -> Point {
        Rotation2::new(self.rotation) * p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &FrameTransform) -> FrameTransform {
        let t = Rotation2::new(self.rotation) * other.translation + self.translation;
        FrameTransform::new(t, self.rotation + other.rotation)
    }

    pub fn inverse(&self) -> FrameTransform {
        let r_inv = Rotation2::new(-self.rotation);
        FrameTransform::new(-(r_inv * self.translation), -self.rotation)
    }
}

impl Default for FrameTransform {
    fn default() -> Self {
        Self::identity()
    }
}

pub fn transform_point(t: &FrameTransform, p: &Point) -> Point {
    t.apply(p)
}

/// Re-expresses a point from frame `L_{k-1}` in frame `L_k`, where `motion`
/// is the pose of `L_k` in `L_{k-1}`.
pub fn project_between_frames(p_prev: &Point, motion: &Pose2D) -> Point {
    motion.as_transform().inverse().apply(p_prev)
}
