//! Planar geometry kernels: shoelace area, closed-polygon containment,
//! segment clipping and polygon intersection area.
//!
//! Rings are closed vertex sequences (first vertex repeated last) in
//! projected meters.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub fn of(points: &[Point]) -> BBox {
        let mut b = BBox {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for p in points {
            b.min_x = b.min_x.min(p.x);
            b.min_y = b.min_y.min(p.y);
            b.max_x = b.max_x.max(p.x);
            b.max_y = b.max_y.max(p.y);
        }
        b
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn intersects(&self, o: &BBox) -> bool {
        self.min_x <= o.max_x && o.min_x <= self.max_x && self.min_y <= o.max_y && o.min_y <= self.max_y
    }

    pub fn union(&self, o: &BBox) -> BBox {
        BBox {
            min_x: self.min_x.min(o.min_x),
            min_y: self.min_y.min(o.min_y),
            max_x: self.max_x.max(o.max_x),
            max_y: self.max_y.max(o.max_y),
        }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }
}

/// Position of a point relative to a closed polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Inside,
    Boundary,
    Outside,
}

#[inline]
fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Signed shoelace area; positive for counter-clockwise rings.
pub fn signed_area(ring: &[Point]) -> f64 {
    ring.windows(2).map(|w| w[0].x * w[1].y - w[1].x * w[0].y).sum::<f64>() / 2.0
}

pub fn is_closed(ring: &[Point]) -> bool {
    ring.len() >= 2 && ring[0] == ring[ring.len() - 1]
}

fn on_segment_exact(p: Point, a: Point, b: Point) -> bool {
    cross(a, b, p) == 0.0 && p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(a.lerp(b, t))
}

/// Winding number of the ring around `p` (non-zero means inside).
fn winding_number(p: Point, ring: &[Point]) -> i32 {
    let mut wn = 0;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.y <= p.y {
            if b.y > p.y && cross(a, b, p) > 0.0 {
                wn += 1;
            }
        } else if b.y <= p.y && cross(a, b, p) < 0.0 {
            wn -= 1;
        }
    }
    wn
}

/// Exact closed-polygon location test (boundary detected by exact
/// collinearity).
pub fn locate(p: Point, ring: &[Point]) -> Location {
    if ring.windows(2).any(|w| on_segment_exact(p, w[0], w[1])) {
        return Location::Boundary;
    }
    if winding_number(p, ring) != 0 {
        Location::Inside
    } else {
        Location::Outside
    }
}

/// Location with a distance tolerance for the boundary band.
pub fn locate_with_tolerance(p: Point, ring: &[Point], eps: f64) -> Location {
    if ring.windows(2).any(|w| segment_distance(p, w[0], w[1]) <= eps) {
        return Location::Boundary;
    }
    if winding_number(p, ring) != 0 {
        Location::Inside
    } else {
        Location::Outside
    }
}

/// Closed rule: boundary counts as inside.
pub fn contains_closed(p: Point, ring: &[Point]) -> bool {
    locate(p, ring) != Location::Outside
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment_exact(a, c, d))
        || (d2 == 0.0 && on_segment_exact(b, c, d))
        || (d3 == 0.0 && on_segment_exact(c, a, b))
        || (d4 == 0.0 && on_segment_exact(d, a, b))
}

/// True when two non-adjacent edges of the ring intersect.
pub fn is_self_intersecting(ring: &[Point]) -> bool {
    let n = ring.len().saturating_sub(1);
    for i in 0..n {
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(ring[i], ring[i + 1], ring[j], ring[j + 1]) {
                return true;
            }
        }
    }
    false
}

/// Parameters in (0, 1) at which segment `a→b` meets the ring boundary.
fn crossing_parameters(a: Point, b: Point, ring: &[Point], out: &mut Vec<f64>) {
    let r = Point::new(b.x - a.x, b.y - a.y);
    let rr = r.x * r.x + r.y * r.y;
    if rr == 0.0 {
        return;
    }
    for w in ring.windows(2) {
        let (c, d) = (w[0], w[1]);
        let s = Point::new(d.x - c.x, d.y - c.y);
        let denom = r.x * s.y - r.y * s.x;
        let qp = Point::new(c.x - a.x, c.y - a.y);
        if denom != 0.0 {
            let t = (qp.x * s.y - qp.y * s.x) / denom;
            let u = (qp.x * r.y - qp.y * r.x) / denom;
            if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
                out.push(t);
            }
        } else if qp.x * r.y - qp.y * r.x == 0.0 {
            // collinear: the overlap endpoints split the segment
            for e in [c, d] {
                let t = ((e.x - a.x) * r.x + (e.y - a.y) * r.y) / rr;
                if (0.0..=1.0).contains(&t) {
                    out.push(t);
                }
            }
        }
    }
}

fn boundary_eps(ring: &[Point]) -> f64 {
    let b = BBox::of(ring);
    1e-9 * (b.width().max(b.height())).max(1.0)
}

/// Sub-intervals of segment `a→b` classified against the ring.
fn classified_pieces(a: Point, b: Point, ring: &[Point]) -> Vec<(Point, Point, Location)> {
    let mut ts = vec![0.0, 1.0];
    crossing_parameters(a, b, ring, &mut ts);
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let eps = boundary_eps(ring);
    let mut out = Vec::with_capacity(ts.len());
    for w in ts.windows(2) {
        if w[1] - w[0] <= 0.0 {
            continue;
        }
        let p = a.lerp(b, w[0]);
        let q = a.lerp(b, w[1]);
        let mid = a.lerp(b, 0.5 * (w[0] + w[1]));
        out.push((p, q, locate_with_tolerance(mid, ring, eps)));
    }
    out
}

/// Length of segment `a→b` lying inside or on the closed polygon.
pub fn clipped_segment_length(a: Point, b: Point, ring: &[Point]) -> f64 {
    classified_pieces(a, b, ring)
        .into_iter()
        .filter(|(_, _, loc)| *loc != Location::Outside)
        .map(|(p, q, _)| p.dist(q))
        .sum()
}

/// Total clipped length of a polyline.
pub fn clipped_polyline_length(line: &[Point], ring: &[Point]) -> f64 {
    line.windows(2).map(|w| clipped_segment_length(w[0], w[1], ring)).sum()
}

/// Counter-clockwise copy of a closed ring.
pub fn ccw(ring: &[Point]) -> Vec<Point> {
    let mut r = ring.to_vec();
    if signed_area(&r) < 0.0 {
        r.reverse();
    }
    r
}

fn same_direction_boundary(p: Point, q: Point, ring: &[Point], eps: f64) -> bool {
    let mid = p.lerp(q, 0.5);
    let d = Point::new(q.x - p.x, q.y - p.y);
    ring.windows(2).any(|w| {
        let e = Point::new(w[1].x - w[0].x, w[1].y - w[0].y);
        segment_distance(mid, w[0], w[1]) <= eps
            && (d.x * e.x + d.y * e.y) > 0.0
            && (d.x * e.y - d.y * e.x).abs() <= 1e-9 * (d.x.hypot(d.y) * e.x.hypot(e.y))
    })
}

/// Area of the intersection of two simple polygons.
///
/// Integrates `x dy` over the boundary of the intersection: pieces of each
/// ring strictly inside the other, plus shared boundary traversed in the same
/// direction (counted once).
pub fn intersection_area(a: &[Point], b: &[Point]) -> f64 {
    if !BBox::of(a).intersects(&BBox::of(b)) {
        return 0.0;
    }
    let a = ccw(a);
    let b = ccw(b);
    let eps = boundary_eps(&a).max(boundary_eps(&b));
    let mut twice = 0.0;
    for w in a.windows(2) {
        for (p, q, loc) in classified_pieces(w[0], w[1], &b) {
            let keep = match loc {
                Location::Inside => true,
                Location::Boundary => same_direction_boundary(p, q, &b, eps),
                Location::Outside => false,
            };
            if keep {
                twice += p.x * q.y - q.x * p.y;
            }
        }
    }
    for w in b.windows(2) {
        for (p, q, loc) in classified_pieces(w[0], w[1], &a) {
            if loc == Location::Inside {
                twice += p.x * q.y - q.x * p.y;
            }
        }
    }
    (twice / 2.0).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, s: f64) -> Vec<Point> {
        vec![
            Point::new(x0, y0),
            Point::new(x0 + s, y0),
            Point::new(x0 + s, y0 + s),
            Point::new(x0, y0 + s),
            Point::new(x0, y0),
        ]
    }

    #[test]
    fn unit_square_containment() {
        let sq = square(0.0, 0.0, 1.0);
        assert_eq!(locate(Point::new(0.5, 0.5), &sq), Location::Inside);
        assert_eq!(locate(Point::new(1.0, 0.3), &sq), Location::Boundary);
        assert_eq!(locate(Point::new(0.0, 0.0), &sq), Location::Boundary);
        assert_eq!(locate(Point::new(2.0, 2.0), &sq), Location::Outside);
    }

    #[test]
    fn shoelace_orientation() {
        let sq = square(0.0, 0.0, 2.0);
        assert_eq!(signed_area(&sq), 4.0);
        let mut rev = sq.clone();
        rev.reverse();
        assert_eq!(signed_area(&rev), -4.0);
    }

    #[test]
    fn bowtie_is_self_intersecting() {
        let bow = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(0.0, 0.0),
        ];
        assert!(is_self_intersecting(&bow));
        assert!(!is_self_intersecting(&square(0.0, 0.0, 1.0)));
    }

    #[test]
    fn segment_crossing_square() {
        let sq = square(0.0, 0.0, 1.0);
        let l = clipped_segment_length(Point::new(-0.5, 0.5), Point::new(1.5, 0.5), &sq);
        assert!((l - 1.0).abs() < 1e-12);
        let along_edge = clipped_segment_length(Point::new(-1.0, 0.0), Point::new(3.0, 0.0), &sq);
        assert!((along_edge - 1.0).abs() < 1e-12);
    }

    #[test]
    fn concave_clip() {
        // U shape: segment through both arms but across the notch
        let u = vec![
            Point::new(0.0, 0.0),
            Point::new(3.0, 0.0),
            Point::new(3.0, 3.0),
            Point::new(2.0, 3.0),
            Point::new(2.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 3.0),
            Point::new(0.0, 3.0),
            Point::new(0.0, 0.0),
        ];
        let l = clipped_segment_length(Point::new(-1.0, 2.0), Point::new(4.0, 2.0), &u);
        assert!((l - 2.0).abs() < 1e-12);
    }

    #[test]
    fn intersection_areas() {
        let a = square(0.0, 0.0, 2.0);
        assert!((intersection_area(&a, &a) - 4.0).abs() < 1e-12);
        let b = square(1.0, 1.0, 2.0);
        assert!((intersection_area(&a, &b) - 1.0).abs() < 1e-12);
        let c = square(5.0, 5.0, 1.0);
        assert_eq!(intersection_area(&a, &c), 0.0);
        let inner = square(0.5, 0.5, 1.0);
        assert!((intersection_area(&a, &inner) - 1.0).abs() < 1e-12);
        // edge-adjacent squares share a boundary in opposite directions
        let adj = square(2.0, 0.0, 2.0);
        assert!(intersection_area(&a, &adj).abs() < 1e-12);
        // half-overlap sharing two edges directionally
        let half = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 2.0),
            Point::new(0.0, 2.0),
            Point::new(0.0, 0.0),
        ];
        assert!((intersection_area(&a, &half) - 2.0).abs() < 1e-12);
    }
}
