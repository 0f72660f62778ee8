use nalgebra::{DMatrix, DVector};

use crate::geometry::Point;

/// Cumulative chord length, the regressor used by [`loess_smooth`].
pub fn chord_parameter(points: &[Point]) -> Vec<f64> {
    let mut t = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    for (i, p) in points.iter().enumerate() {
        if i > 0 {
            acc += (p - points[i - 1]).norm();
        }
        t.push(acc);
    }
    t
}

/// Number of neighbours inside the local window.
pub fn neighbourhood_size(n: usize, span: f64) -> usize {
    ((span * n as f64).ceil() as usize).clamp(4.min(n), n)
}

pub fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let v = 1.0 - u * u * u;
        v * v * v
    }
}

/// Local linear LOESS of x and y against cumulative chord length.
///
/// For point i the window is its `q = ⌈span·n⌉` nearest neighbours in the
/// regressor (at least 4), `h` is the q-th smallest distance and weights are
/// tricube in `d/h`. A line fits a line exactly, so collinear input is
/// returned unchanged. Fewer than 3 points pass through.
pub fn loess_smooth(points: &[Point], span: f64) -> Vec<Point> {
    assert!(span > 0.0 && span <= 1.0, "span must lie in (0, 1]");
    let n = points.len();
    if n < 3 {
        return points.to_vec();
    }
    let t = chord_parameter(points);
    let q = neighbourhood_size(n, span);
    let mut dist = vec![0.0; n];
    (0..n)
        .map(|i| {
            for (d, tj) in dist.iter_mut().zip(&t) {
                *d = (tj - t[i]).abs();
            }
            let mut sorted = dist.clone();
            sorted.sort_by(f64::total_cmp);
            let h = sorted[q - 1];
            let w: Vec<f64> = if h > 0.0 {
                dist.iter().map(|d| tricube(d / h)).collect()
            } else {
                dist.iter().map(|d| if *d == 0.0 { 1.0 } else { 0.0 }).collect()
            };
            fit_at(&t, points, &w, t[i]).unwrap_or(points[i])
        })
        .collect()
}

/// Weighted least squares of `[1, t − t₀]` against x and y, evaluated at t₀.
fn fit_at(t: &[f64], points: &[Point], w: &[f64], t0: f64) -> Option<Point> {
    let rows: Vec<usize> = (0..t.len()).filter(|&j| w[j] > 0.0).collect();
    let m = rows.len();
    if m == 0 {
        return None;
    }
    let sw: Vec<f64> = rows.iter().map(|&j| w[j].sqrt()).collect();
    let design = DMatrix::from_fn(m, 2, |r, c| if c == 0 { sw[r] } else { sw[r] * (t[rows[r]] - t0) });
    let rhs = DMatrix::from_fn(m, 2, |r, c| sw[r] * if c == 0 { points[rows[r]].x } else { points[rows[r]].y });
    let spread = rows.iter().any(|&j| t[j] != t0);
    if !spread {
        let total: f64 = rows.iter().map(|&j| w[j]).sum();
        let mean = rows.iter().fold(DVector::zeros(2), |acc, &j| {
            acc + DVector::from_vec(vec![points[j].x, points[j].y]) * w[j]
        }) / total;
        return Some(Point::new(mean[0], mean[1]));
    }
    let (q, r) = design.qr().unpack();
    let beta = r.solve_upper_triangular(&(q.transpose() * rhs))?;
    Some(Point::new(beta[(0, 0)], beta[(0, 1)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Closed-form weighted linear regression, independent of the QR path.
    fn oracle(points: &[Point], span: f64) -> Vec<Point> {
        let n = points.len();
        let mut t = vec![0.0];
        for i in 1..n {
            t.push(t[i - 1] + (points[i] - points[i - 1]).norm());
        }
        let q = ((span * n as f64).ceil() as usize).max(4).min(n);
        (0..n)
            .map(|i| {
                let mut d: Vec<f64> = t.iter().map(|tj| (tj - t[i]).abs()).collect();
                let dd = d.clone();
                d.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let h = d[q - 1];
                let w: Vec<f64> = dd
                    .iter()
                    .map(|x| {
                        let u = x / h;
                        if u < 1.0 {
                            (1.0 - u.powi(3)).powi(3)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let sw: f64 = w.iter().sum();
                let tb = w.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>() / sw;
                let xb = w.iter().zip(points).map(|(a, p)| a * p.x).sum::<f64>() / sw;
                let yb = w.iter().zip(points).map(|(a, p)| a * p.y).sum::<f64>() / sw;
                let stt: f64 = w.iter().zip(&t).map(|(a, b)| a * (b - tb).powi(2)).sum();
                let stx: f64 = (0..n).map(|j| w[j] * (t[j] - tb) * (points[j].x - xb)).sum();
                let sty: f64 = (0..n).map(|j| w[j] * (t[j] - tb) * (points[j].y - yb)).sum();
                Point::new(xb + stx / stt * (t[i] - tb), yb + sty / stt * (t[i] - tb))
            })
            .collect()
    }

    #[test]
    fn collinear_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = 0.0;
        let pts: Vec<Point> = (0..40)
            .map(|_| {
                s += rng.gen_range(0.05..0.4);
                Point::new(1.0 + 0.6 * s, -2.0 + 0.8 * s)
            })
            .collect();
        for span in [0.05, 0.3, 1.0] {
            for (a, b) in loess_smooth(&pts, span).iter().zip(&pts) {
                assert!((a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn spike_is_pulled_toward_line() {
        let mut pts: Vec<Point> = (0..21).map(|i| Point::new(i as f64 * 0.1, 0.0)).collect();
        pts[10].y = 0.5;
        let out = loess_smooth(&pts, 0.3);
        assert!(out[10].y > 0.0 && out[10].y < 0.5);
        let want = oracle(&pts, 0.3);
        assert!((out[10] - want[10]).norm() < 1e-9);
    }

    #[test]
    fn short_input_passes_through() {
        let pts = vec![Point::new(0.0, 0.0), Point::new(1.0, 3.0)];
        assert_eq!(loess_smooth(&pts, 0.3), pts);
    }

    proptest::proptest! {
        #[test]
        fn equals_weighted_least_squares_oracle(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Point> = (0..50).map(|_| Point::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0))).collect();
            let got = loess_smooth(&pts, 0.3);
            let want = oracle(&pts, 0.3);
            for (g, w) in got.iter().zip(&want) {
                proptest::prop_assert!((g - w).norm() < 1e-9, "{g} vs {w}");
            }
        }
    }
}
