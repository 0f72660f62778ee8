//! Fresnel integrals `C(x) = ∫₀ˣ cos(πu²/2) du`, `S(x) = ∫₀ˣ sin(πu²/2) du`.
//!
//! Maclaurin series up to `|x| = SERIES_LIMIT`, complex continued fraction
//! (modified Lentz) above it. Both branches hold 1e-15 absolute accuracy
//! near the switch.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Complex;

pub const SERIES_LIMIT: f64 = 1.5;

const EPS: f64 = 1e-16;
const MAX_TERMS: usize = 200;

pub fn fresnel(x: f64) -> (f64, f64) {
    let ax = x.abs();
    let (c, s) = if ax <= SERIES_LIMIT {
        series(ax)
    } else {
        continued_fraction(ax)
    };
    if x < 0.0 {
        (-c, -s)
    } else {
        (c, s)
    }
}

fn series(x: f64) -> (f64, f64) {
    // term_k = (-1)^j (π/2)^k x^(2k+1) / k!, k = 2j feeds C, k = 2j+1 feeds S,
    // each divided by 2k+1.
    let t = FRAC_PI_2 * x * x;
    let mut term = x;
    let (mut c, mut s) = (0.0, 0.0);
    for k in 0..MAX_TERMS {
        let contrib = term / (2 * k + 1) as f64;
        match k % 4 {
            0 => c += contrib,
            1 => s += contrib,
            2 => c -= contrib,
            _ => s -= contrib,
        }
        if contrib.abs() < EPS * c.abs().max(s.abs()).max(1e-300) && k > 2 {
            break;
        }
        term *= t / (k + 1) as f64;
    }
    (c, s)
}

fn continued_fraction(x: f64) -> (f64, f64) {
    let one = Complex::new(1.0, 0.0);
    let pix2 = PI * x * x;
    let mut b = Complex::new(1.0, -pix2);
    let mut cc = Complex::new(1.0 / f64::MIN_POSITIVE, 0.0);
    let mut d = one / b;
    let mut h = d;
    let mut n = -1.0;
    for _ in 2..=MAX_TERMS {
        n += 2.0;
        let a = -n * (n + 1.0);
        b += Complex::new(4.0, 0.0);
        d = one / (d * a + b);
        cc = b + Complex::new(a, 0.0) / cc;
        let del = cc * d;
        h *= del;
        if (del.re - 1.0).abs() + del.im.abs() < EPS {
            break;
        }
    }
    h *= Complex::new(x, -x);
    let phase = Complex::new((0.5 * pix2).cos(), (0.5 * pix2).sin());
    let cs = Complex::new(0.5, 0.5) * (one - phase * h);
    (cs.re, cs.im)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 121 points on [-3, 3] from a 50-digit series evaluation.
    #[test]
    fn matches_high_precision_table() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/fresnel_oracle.csv");
        let mut rdr = csv::Reader::from_path(path).unwrap();
        let mut rows = 0;
        for rec in rdr.records() {
            let rec = rec.unwrap();
            let v: Vec<f64> = rec.iter().map(|f| f.parse().unwrap()).collect();
            let (c, s) = fresnel(v[0]);
            assert!((c - v[1]).abs() <= 1e-10 && (s - v[2]).abs() <= 1e-10, "x = {}", v[0]);
            rows += 1;
        }
        assert_eq!(rows, 121);
    }

    #[test]
    fn known_values() {
        assert_eq!(fresnel(0.0), (0.0, 0.0));
        let (c, s) = fresnel(1.0);
        assert!((c - 0.779_893_400_376_822_8).abs() < 1e-15);
        assert!((s - 0.438_259_147_390_354_8).abs() < 1e-15);
        assert_eq!(fresnel(-1.0), (-c, -s));
    }

    #[test]
    fn branches_agree_at_switch() {
        for dx in [-1e-9, 0.0, 1e-9] {
            let x = SERIES_LIMIT + dx;
            let a = series(x);
            let b = continued_fraction(x);
            assert!((a.0 - b.0).abs() < 2e-15 && (a.1 - b.1).abs() < 2e-15, "{a:?} {b:?}");
        }
    }

    #[test]
    fn limits_at_infinity() {
        let (c, s) = fresnel(1e6);
        assert!((c - 0.5).abs() < 1e-6 && (s - 0.5).abs() < 1e-6);
    }

    proptest::proptest! {
        #[test]
        fn odd_and_bounded(x in -5.0..5.0f64) {
            let (c, s) = fresnel(x);
            let (cn, sn) = fresnel(-x);
            proptest::prop_assert_eq!((c, s), (-cn, -sn));
            proptest::prop_assert!(c.abs() <= 0.9 && s.abs() <= 0.9);
        }
    }
}
