//! Planar helpers: convex hull and minimum-area enclosing rectangle.

/// Integer lattice point (pixel corner coordinates).
pub type Point = (i64, i64);

fn cross(o: Point, a: Point, b: Point) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull in counter-clockwise order (y axis up), without collinear
/// points. Andrew's monotone chain.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Oriented rectangle enclosing a point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    /// Side length along `angle`.
    pub extent_along: f64,
    /// Side length perpendicular to `angle`.
    pub extent_across: f64,
    /// Direction of the first side, radians.
    pub angle: f64,
    pub corners: [(f64, f64); 4],
}

impl OrientedRect {
    pub fn area(&self) -> f64 {
        self.extent_along * self.extent_across
    }

    pub fn long_side(&self) -> f64 {
        self.extent_along.max(self.extent_across)
    }

    pub fn short_side(&self) -> f64 {
        self.extent_along.min(self.extent_across)
    }
}

fn dot(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.0 + a.1 * b.1
}

/// Minimum-area enclosing rectangle of a convex polygon given in
/// counter-clockwise order, by rotating calipers.
///
/// One side of the optimal rectangle is collinear with a hull edge, so the
/// four calipers only need to visit each edge once. Returns `None` for an
/// empty hull.
pub fn min_area_rect(hull: &[Point]) -> Option<OrientedRect> {
    let n = hull.len();
    let pts: Vec<(f64, f64)> = hull.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
    match n {
        0 => return None,
        1 => return Some(OrientedRect { extent_along: 0.0, extent_across: 0.0, angle: 0.0, corners: [pts[0]; 4] }),
        2 => {
            let d = (pts[1].0 - pts[0].0, pts[1].1 - pts[0].1);
            return Some(OrientedRect {
                extent_along: d.0.hypot(d.1),
                extent_across: 0.0,
                angle: d.1.atan2(d.0),
                corners: [pts[0], pts[1], pts[1], pts[0]],
            });
        }
        _ => {}
    }

    let edge_dir = |i: usize| {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len = dx.hypot(dy);
        (dx / len, dy / len)
    };
    let along = |j: usize, u: (f64, f64)| dot(pts[j], u);
    // Inward normal of a counter-clockwise edge.
    let across = |j: usize, u: (f64, f64)| dot(pts[j], (-u.1, u.0));

    let u0 = edge_dir(0);
    let argmax = |f: &dyn Fn(usize) -> f64| (0..n).fold(0, |best, j| if f(j) > f(best) { j } else { best });
    let mut right = argmax(&|j| along(j, u0));
    let mut top = argmax(&|j| across(j, u0));
    let mut left = argmax(&|j| -along(j, u0));

    let mut best: Option<OrientedRect> = None;
    for i in 0..n {
        let u = edge_dir(i);
        for _ in 0..n {
            let next = (right + 1) % n;
            if along(next, u) >= along(right, u) {
                right = next;
            } else {
                break;
            }
        }
        for _ in 0..n {
            let next = (top + 1) % n;
            if across(next, u) >= across(top, u) {
                top = next;
            } else {
                break;
            }
        }
        for _ in 0..n {
            let next = (left + 1) % n;
            if along(next, u) <= along(left, u) {
                left = next;
            } else {
                break;
            }
        }

        let base = across(i, u);
        let lo = along(left, u);
        let hi = along(right, u);
        let height = across(top, u) - base;
        let width = hi - lo;
        let area = width * height;
        if best.is_none_or(|b| area < b.area()) {
            let v = (-u.1, u.0);
            let corner = |s: f64, t: f64| (s * u.0 + t * v.0, s * u.1 + t * v.1);
            best = Some(OrientedRect {
                extent_along: width,
                extent_across: height,
                angle: u.1.atan2(u.0),
                corners: [corner(lo, base), corner(hi, base), corner(hi, base + height), corner(lo, base + height)],
            });
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent route: try every hull edge direction and project all points.
    fn brute_min_area(points: &[Point]) -> f64 {
        let hull = convex_hull(points);
        let n = hull.len();
        let mut best = f64::INFINITY;
        for i in 0..n {
            let (a, b) = (hull[i], hull[(i + 1) % n]);
            let (dx, dy) = ((b.0 - a.0) as f64, (b.1 - a.1) as f64);
            let len = dx.hypot(dy);
            let (ux, uy) = (dx / len, dy / len);
            let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for &(x, y) in points {
                let (x, y) = (x as f64, y as f64);
                let s = x * ux + y * uy;
                let t = -x * uy + y * ux;
                lo_u = lo_u.min(s);
                hi_u = hi_u.max(s);
                lo_v = lo_v.min(t);
                hi_v = hi_v.max(t);
            }
            best = best.min((hi_u - lo_u) * (hi_v - lo_v));
        }
        best
    }

    #[test]
    fn hull_of_square_with_interior() {
        let pts = [(0, 0), (2, 0), (2, 2), (0, 2), (1, 1), (1, 0)];
        assert_eq!(convex_hull(&pts), vec![(0, 0), (2, 0), (2, 2), (0, 2)]);
    }

    #[test]
    fn axis_aligned_rectangle() {
        let hull = convex_hull(&[(0, 0), (100, 0), (100, 40), (0, 40)]);
        let r = min_area_rect(&hull).unwrap();
        assert!((r.long_side() - 100.0).abs() < 1e-9);
        assert!((r.short_side() - 40.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_hulls() {
        assert!(min_area_rect(&[]).is_none());
        let r = min_area_rect(&convex_hull(&[(0, 0), (3, 4)])).unwrap();
        assert!((r.long_side() - 5.0).abs() < 1e-12);
        assert_eq!(r.short_side(), 0.0);
    }

    proptest! {
        #[test]
        fn calipers_match_brute_force(points in proptest::collection::vec((-50i64..50, -50i64..50), 3..40)) {
            let hull = convex_hull(&points);
            prop_assume!(hull.len() >= 3);
            let r = min_area_rect(&hull).unwrap();
            let expected = brute_min_area(&points);
            prop_assert!((r.area() - expected).abs() <= 1e-6 * expected.max(1.0), "{} vs {}", r.area(), expected);
        }
    }
}
