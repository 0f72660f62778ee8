use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::sim::Scan;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub centroid: Point,
    pub point_count: usize,
}

pub(crate) struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

fn point_order(a: &Point, b: &Point) -> std::cmp::Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y))
}

/// Single-linkage Euclidean clustering of a scan.
///
/// Two points share a cluster iff a chain of hops of length `≤ d_max` joins
/// them. Groups with fewer than `n_min` points are dropped. Members are
/// summed in lexicographic order and clusters are sorted by their smallest
/// member, so the output does not depend on the input point order.
pub fn cluster_scan(scan: &Scan, d_max: f64, n_min: usize) -> Vec<Cluster> {
    assert!(d_max > 0.0 && n_min >= 1);
    let pts: Vec<Point> = scan.points.iter().map(|p| p.to_cartesian()).collect();
    cluster_points(&pts, d_max, n_min)
}

pub fn cluster_points(pts: &[Point], d_max: f64, n_min: usize) -> Vec<Cluster> {
    let cell = |p: &Point| ((p.x / d_max).floor() as i64, (p.y / d_max).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in pts.iter().enumerate() {
        grid.entry(cell(p)).or_default().push(i);
    }
    let d2 = d_max * d_max;
    let mut sets = DisjointSet::new(pts.len());
    for (i, p) in pts.iter().enumerate() {
        let (cx, cy) = cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = grid.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                for &j in bucket {
                    if j > i && (pts[j] - p).norm_squared() <= d2 {
                        sets.union(i, j);
                    }
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<Point>> = HashMap::new();
    for (i, p) in pts.iter().enumerate() {
        groups.entry(sets.find(i)).or_default().push(*p);
    }
    let mut members: Vec<Vec<Point>> = groups
        .into_values()
        .filter(|g| g.len() >= n_min)
        .map(|mut g| {
            g.sort_by(point_order);
            g
        })
        .collect();
    members.sort_by(|a, b| point_order(&a[0], &b[0]));
    members
        .into_iter()
        .map(|g| {
            let n = g.len() as f64;
            let (sx, sy) = g.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
            Cluster {
                centroid: Point::new(sx / n, sy / n),
                point_count: g.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ScanPoint;
    use std::f64::consts::TAU;

    fn scan_of(points: &[Point]) -> Scan {
        Scan {
            timestamp: 0.0,
            points: points
                .iter()
                .map(|p| ScanPoint {
                    r: p.coords.norm(),
                    alpha: p.y.atan2(p.x).rem_euclid(TAU),
                })
                .collect(),
        }
    }

    #[test]
    fn isolated_points_dropped_by_richness() {
        let s = scan_of(&[Point::new(1.0, 0.0), Point::new(11.0, 0.0)]);
        assert!(cluster_scan(&s, 0.3, 2).is_empty());
        assert_eq!(cluster_scan(&s, 0.3, 1).len(), 2);
    }

    #[test]
    fn ring_centroid_is_centre() {
        let c = Point::new(3.0, -1.0);
        let pts: Vec<Point> = (0..20)
            .map(|i| {
                let a = TAU * i as f64 / 20.0;
                Point::new(c.x + 0.2 * a.cos(), c.y + 0.2 * a.sin())
            })
            .collect();
        let out = cluster_points(&pts, 0.3, 4);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].point_count, 20);
        assert!((out[0].centroid - c).norm() < 1e-9);
    }

    /// All-pairs union-find; returns sorted (count, centroid) pairs.
    fn oracle(pts: &[Point], d_max: f64, n_min: usize) -> Vec<(usize, Point)> {
        let n = pts.len();
        let mut label: Vec<usize> = (0..n).collect();
        fn root(l: &[usize], mut x: usize) -> usize {
            while l[x] != x {
                x = l[x];
            }
            x
        }
        for i in 0..n {
            for j in 0..n {
                if (pts[i] - pts[j]).norm() <= d_max {
                    let (a, b) = (root(&label, i), root(&label, j));
                    label[a.max(b)] = a.min(b);
                }
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<Point>> = Default::default();
        for (i, p) in pts.iter().enumerate() {
            groups.entry(root(&label, i)).or_default().push(*p);
        }
        let mut out: Vec<(usize, Point)> = groups
            .into_values()
            .filter(|g| g.len() >= n_min)
            .map(|g| {
                let c = g.iter().fold(nalgebra::Vector2::zeros(), |acc, p| acc + p.coords) / g.len() as f64;
                (g.len(), Point::from(c))
            })
            .collect();
        out.sort_by(|a, b| a.1.x.total_cmp(&b.1.x).then(a.1.y.total_cmp(&b.1.y)));
        out
    }

    proptest::proptest! {
        #[test]
        fn matches_union_find_and_is_order_free(
            raw in proptest::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 0..80),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let pts: Vec<Point> = raw.iter().map(|&(x, y)| Point::new(x, y)).collect();
            let got = cluster_points(&pts, 0.3, 2);
            let mut shuffled = pts.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            proptest::prop_assert_eq!(&got, &cluster_points(&shuffled, 0.3, 2));
            let mut got_sorted: Vec<(usize, Point)> = got.iter().map(|c| (c.point_count, c.centroid)).collect();
            got_sorted.sort_by(|a, b| a.1.x.total_cmp(&b.1.x).then(a.1.y.total_cmp(&b.1.y)));
            let want = oracle(&pts, 0.3, 2);
            proptest::prop_assert_eq!(got_sorted.len(), want.len());
            for (g, w) in got_sorted.iter().zip(&want) {
                proptest::prop_assert_eq!(g.0, w.0);
                proptest::prop_assert!((g.1 - w.1).norm() < 1e-12);
            }
        }
    }
}
