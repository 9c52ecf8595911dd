//! Planar point/segment/polygon helpers.

pub type Point = [f64; 2];

/// Distance from `p` to the closed segment `a`–`b`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    (p[0] - cx).hypot(p[1] - cy)
}

/// Minimum distance from `p` to any segment of `line`.
pub fn point_polyline_distance(p: Point, line: &[Point]) -> f64 {
    match line {
        [] => f64::INFINITY,
        [only] => (p[0] - only[0]).hypot(p[1] - only[1]),
        _ => line.windows(2).map(|w| point_segment_distance(p, w[0], w[1])).fold(f64::INFINITY, f64::min),
    }
}

pub fn polyline_length(line: &[Point]) -> f64 {
    line.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).sum()
}

/// Signed shoelace area; positive for counter-clockwise vertex order.
pub fn signed_area(polygon: &[Point]) -> f64 {
    let n = polygon.len();
    (0..n)
        .map(|i| {
            let (a, b) = (polygon[i], polygon[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

/// Even-odd containment test for an implicitly closed polygon. Points on
/// an edge count as inside.
pub fn polygon_contains(polygon: &[Point], p: Point) -> bool {
    let n = polygon.len();
    if n < 3 {
        return false;
    }
    let scale = polygon.iter().flatten().fold(1.0f64, |m, c| m.max(c.abs()));
    let on_edge_tol = 1e-12 * scale;
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (polygon[i], polygon[(i + 1) % n]);
        if point_segment_distance(p, a, b) <= on_edge_tol {
            return true;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x_cross = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_distance_cases() {
        assert_eq!(point_segment_distance([0.0, 1.0], [-1.0, 0.0], [1.0, 0.0]), 1.0);
        assert_eq!(point_segment_distance([3.0, 4.0], [-1.0, 0.0], [0.0, 0.0]), 5.0);
        assert_eq!(point_segment_distance([2.0, 0.0], [0.0, 0.0], [0.0, 0.0]), 2.0);
    }

    #[test]
    fn polyline_helpers() {
        let l = [[0.0, 0.0], [3.0, 0.0], [3.0, 4.0]];
        assert_eq!(polyline_length(&l), 7.0);
        assert_eq!(point_polyline_distance([4.0, 2.0], &l), 1.0);
    }

    #[test]
    fn containment() {
        let square = [[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]];
        assert!(polygon_contains(&square, [1.0, 1.0]));
        assert!(polygon_contains(&square, [2.0, 1.0]));
        assert!(polygon_contains(&square, [0.0, 0.0]));
        assert!(!polygon_contains(&square, [2.5, 1.0]));
        assert_eq!(signed_area(&square), 4.0);
        let notch = [[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [2.0, 1.0], [0.0, 4.0]];
        assert!(!polygon_contains(&notch, [2.0, 3.0]));
        assert!(polygon_contains(&notch, [1.0, 1.0]));
    }
}
