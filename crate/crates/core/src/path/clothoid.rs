use serde::{Deserialize, Serialize};

use super::fresnel::fresnel;
use super::PathError;
use crate::geometry::{normalize_angle, Point, Pose2D};

/// Clothoid arc: curvature varies linearly with arc length,
/// `κ(s) = kappa0 + dkappa·s` for `s ∈ [0, L]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClothoidSegment {
    pub x0: f64,
    pub y0: f64,
    pub theta0: f64,
    pub kappa0: f64,
    pub dkappa: f64,
    #[serde(rename = "L")]
    pub length: f64,
}

impl ClothoidSegment {
    pub fn start(&self) -> Point {
        Point::new(self.x0, self.y0)
    }

    pub fn kappa_at(&self, s: f64) -> f64 {
        self.kappa0 + self.dkappa * s
    }

    /// Unwrapped heading.
    pub fn theta_at(&self, s: f64) -> f64 {
        self.theta0 + s * (self.kappa0 + 0.5 * self.dkappa * s)
    }

    pub fn point_at(&self, s: f64) -> Point {
        let (x, y) = xy_integrals(self.dkappa * s * s, self.kappa0 * s, self.theta0);
        Point::new(self.x0 + s * x, self.y0 + s * y)
    }

    pub fn pose_at(&self, s: f64) -> Pose2D {
        let p = self.point_at(s);
        Pose2D::new(p.x, p.y, self.theta_at(s))
    }

    pub fn end(&self) -> Point {
        self.point_at(self.length)
    }

    pub fn kappa_end(&self) -> f64 {
        self.kappa_at(self.length)
    }
}

/// Below this |a| the Fresnel form loses digits to cancellation and the
/// series in `a` takes over.
const SMALL_A: f64 = 0.01;

/// `(X, Y) = ∫₀¹ (cos, sin)(a/2·τ² + b·τ + c) dτ`.
pub fn xy_integrals(a: f64, b: f64, c: f64) -> (f64, f64) {
    if a.abs() < SMALL_A {
        xy_small_a(a, b, c)
    } else {
        xy_fresnel(a, b, c)
    }
}

fn xy_fresnel(a: f64, b: f64, c: f64) -> (f64, f64) {
    let sign = a.signum();
    let z = (a.abs() / std::f64::consts::PI).sqrt();
    let shift = b / a;
    let eta = c - b * b / (2.0 * a);
    let (c0, s0) = fresnel(z * shift);
    let (c1, s1) = fresnel(z * (1.0 + shift));
    let (dc, ds) = (c1 - c0, s1 - s0);
    let (se, ce) = eta.sin_cos();
    ((ce * dc - sign * se * ds) / z, (se * dc + sign * ce * ds) / z)
}

const SMALL_A_TERMS: usize = 8;

fn xy_small_a(a: f64, b: f64, c: f64) -> (f64, f64) {
    let (mc, ms) = moments(b, 2 * SMALL_A_TERMS);
    let mut x = 0.0;
    let mut y = 0.0;
    let mut coef = 1.0;
    for n in 0..SMALL_A_TERMS {
        let gamma = c + n as f64 * std::f64::consts::FRAC_PI_2;
        let (sg, cg) = gamma.sin_cos();
        let k = 2 * n;
        x += coef * (cg * mc[k] - sg * ms[k]);
        y += coef * (sg * mc[k] + cg * ms[k]);
        coef *= 0.5 * a / (n + 1) as f64;
    }
    (x, y)
}

/// `∫₀¹ τᵏ cos(bτ) dτ` and `∫₀¹ τᵏ sin(bτ) dτ` for `k = 0..=kmax`.
fn moments(b: f64, kmax: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mc = vec![0.0; kmax + 1];
    let mut ms = vec![0.0; kmax + 1];
    if b.abs() < 4.0 {
        let b2 = b * b;
        for k in 0..=kmax {
            let (mut tc, mut ts) = (1.0, b);
            let (mut sc, mut ss) = (0.0, 0.0);
            for j in 0..60 {
                let dc = tc / (k + 2 * j + 1) as f64;
                let ds = ts / (k + 2 * j + 2) as f64;
                sc += dc;
                ss += ds;
                if dc.abs() < 1e-18 && ds.abs() < 1e-18 {
                    break;
                }
                tc *= -b2 / ((2 * j + 1) * (2 * j + 2)) as f64;
                ts *= -b2 / ((2 * j + 2) * (2 * j + 3)) as f64;
            }
            mc[k] = sc;
            ms[k] = ss;
        }
    } else {
        // Integration by parts; the k/b gain stays small for k < 2|b|.
        let (sb, cb) = b.sin_cos();
        mc[0] = sb / b;
        ms[0] = (1.0 - cb) / b;
        for k in 1..=kmax {
            let kb = k as f64 / b;
            mc[k] = sb / b - kb * ms[k - 1];
            ms[k] = -cb / b + kb * mc[k - 1];
        }
    }
    (mc, ms)
}

const G1_TOL: f64 = 1e-14;
const G1_MAX_ITER: usize = 100;

/// Clothoid from `(p0, θ0)` reaching `(p1, θ1)`.
///
/// Rotating into the chord frame leaves one unknown `A`. The arc must hit
/// the chord direction, `Y(2A, δ − A, φ₀) = 0`, and then
/// `L = r / X(2A, δ − A, φ₀)`, `κ₀ = (δ − A)/L`, `κ' = 2A/L²`. The root is
/// found by damped Newton from `A = 3(φ₀ + φ₁)`. That guess is exact for
/// arcs and lines and close to the root across the practical range.
pub fn clothoid_g1_fit(p0: Point, theta0: f64, p1: Point, theta1: f64) -> Result<ClothoidSegment, PathError> {
    let d = p1 - p0;
    let r = d.norm();
    if r < 1e-12 {
        return Err(PathError::DegenerateChord);
    }
    let phi = d.y.atan2(d.x);
    let phi0 = normalize_angle(theta0 - phi);
    let phi1 = normalize_angle(theta1 - phi);
    let delta = phi1 - phi0;
    let g = |a: f64| xy_integrals(2.0 * a, delta - a, phi0).1;

    let mut best: Option<(f64, f64)> = None;
    for guess in [3.0 * (phi0 + phi1), 0.0, phi0 + phi1, 6.0 * (phi0 + phi1)] {
        let (a, res) = newton_1d(&g, guess);
        let x = xy_integrals(2.0 * a, delta - a, phi0).0;
        if res.abs() <= 1e-10 && x > 0.0 {
            let length = r / x;
            return Ok(ClothoidSegment {
                x0: p0.x,
                y0: p0.y,
                theta0,
                kappa0: (delta - a) / length,
                dkappa: 2.0 * a / (length * length),
                length,
            });
        }
        if best.is_none_or(|(_, b)| res.abs() < b) {
            best = Some((a, res.abs()));
        }
    }
    Err(PathError::G1NoConvergence {
        residual: best.map_or(f64::INFINITY, |b| b.1),
    })
}

fn newton_1d(g: &impl Fn(f64) -> f64, mut a: f64) -> (f64, f64) {
    let mut ga = g(a);
    for _ in 0..G1_MAX_ITER {
        if ga.abs() < G1_TOL {
            break;
        }
        let h = 1e-6 * a.abs().max(1.0);
        let dg = (g(a + h) - g(a - h)) / (2.0 * h);
        if dg == 0.0 || !dg.is_finite() {
            break;
        }
        let step = -ga / dg;
        let mut lambda = 1.0;
        let mut improved = false;
        while lambda > 1e-6 {
            let cand = a + lambda * step;
            let gc = g(cand);
            if gc.abs() < ga.abs() {
                a = cand;
                ga = gc;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (a, ga)
}
