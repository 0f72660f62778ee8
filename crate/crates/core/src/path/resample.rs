use crate::geometry::Point;

/// Points every `spacing` metres of arc length along the polyline, plus the
/// final endpoint when it does not already coincide with the last sample.
pub fn resample_uniform(points: &[Point], spacing: f64) -> Vec<Point> {
    assert!(spacing > 0.0, "spacing must be positive");
    let Some(&first) = points.first() else {
        return Vec::new();
    };
    let mut out = vec![first];
    let mut next = spacing;
    let mut walked = 0.0;
    for w in points.windows(2) {
        let seg = w[1] - w[0];
        let len = seg.norm();
        if len == 0.0 {
            continue;
        }
        while next <= walked + len + 1e-12 {
            let f = ((next - walked) / len).min(1.0);
            out.push(w[0] + seg * f);
            next += spacing;
        }
        walked += len;
    }
    let last = *points.last().unwrap();
    if walked == 0.0 {
        return out;
    }
    let tail = walked - (next - spacing);
    if tail > 1e-9 {
        out.push(last);
    } else if let Some(p) = out.last_mut() {
        *p = last;
    }
    out
}
