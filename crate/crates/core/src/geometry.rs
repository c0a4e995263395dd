//! Planar geometry shared by radio shadowing and sensor occlusion.

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Add for Vec2 {
    type Output = Vec2;

    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;

    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn scale(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        self + (o - self).scale(t)
    }
}

/// Navigation heading of a direction vector: degrees clockwise from north.
pub fn heading_deg(dir: Vec2) -> f64 {
    let h = dir.x.atan2(dir.y).to_degrees();
    if h < 0.0 {
        h + 360.0
    } else {
        h
    }
}

/// Unit vector pointing along a navigation heading.
pub fn heading_vector(heading: f64) -> Vec2 {
    let r = heading.to_radians();
    Vec2::new(r.sin(), r.cos())
}

/// A simple polygon stored as an open ring (last vertex != first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub id: String,
    pub vertices: Vec<Vec2>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Location {
    Inside,
    Outside,
    Boundary,
}

impl Polygon {
    fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    fn locate(&self, p: Vec2) -> Location {
        for (a, b) in self.edges() {
            if on_segment(p, a, b) {
                return Location::Boundary;
            }
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        if inside {
            Location::Inside
        } else {
            Location::Outside
        }
    }

    /// Points strictly inside the ring.
    pub fn contains(&self, p: Vec2) -> bool {
        self.locate(p) == Location::Inside
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    /// Boundary crossings and interior length of the segment `a -> b`.
    ///
    /// The segment is cut at every contact with the ring; each piece is
    /// classified by its midpoint. A crossing is a change between inside and
    /// not-inside across consecutive pieces, so a segment that only grazes a
    /// vertex or runs along an edge counts zero crossings and zero length.
    pub fn traverse(&self, a: Vec2, b: Vec2) -> Traversal {
        let seg = b - a;
        let len = seg.norm();
        if len < EPS {
            return Traversal::default();
        }
        let (lo, hi) = self.bounding_box();
        if a.x.max(b.x) < lo.x - EPS
            || a.x.min(b.x) > hi.x + EPS
            || a.y.max(b.y) < lo.y - EPS
            || a.y.min(b.y) > hi.y + EPS
        {
            return Traversal::default();
        }

        let mut cuts = vec![0.0, 1.0];
        for (p, q) in self.edges() {
            let e = q - p;
            let denom = seg.cross(e);
            let ap = p - a;
            if denom.abs() < EPS * len * e.norm().max(1.0) {
                if ap.cross(seg).abs() < EPS * len {
                    // collinear: cut where the edge's endpoints project
                    for v in [p, q] {
                        let t = (v - a).dot(seg) / (len * len);
                        if (0.0..=1.0).contains(&t) {
                            cuts.push(t);
                        }
                    }
                }
                continue;
            }
            let t = ap.cross(e) / denom;
            let u = ap.cross(seg) / denom;
            if (-EPS..=1.0 + EPS).contains(&t) && (-EPS..=1.0 + EPS).contains(&u) {
                cuts.push(t.clamp(0.0, 1.0));
            }
        }
        cuts.sort_by(|x, y| x.total_cmp(y));
        cuts.dedup_by(|x, y| (*x - *y).abs() * len < 1e-7);

        let mut crossings = 0;
        let mut inside_len = 0.0;
        let mut prev: Option<bool> = None;
        for w in cuts.windows(2) {
            let piece = (w[1] - w[0]) * len;
            if piece < 1e-7 {
                continue;
            }
            let mid = a.lerp(b, 0.5 * (w[0] + w[1]));
            let inside = self.locate(mid) == Location::Inside;
            if inside {
                inside_len += piece;
            }
            if let Some(p) = prev {
                if p != inside {
                    crossings += 1;
                }
            }
            prev = Some(inside);
        }
        Traversal {
            crossings,
            inside_length: inside_len,
        }
    }
}

fn on_segment(p: Vec2, a: Vec2, b: Vec2) -> bool {
    let ab = b - a;
    let ap = p - a;
    let len = ab.norm();
    if len < EPS {
        return ap.norm() < 1e-7;
    }
    if (ab.cross(ap) / len).abs() > 1e-7 {
        return false;
    }
    let t = ap.dot(ab) / (len * len);
    (-1e-12..=1.0 + 1e-12).contains(&t)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Traversal {
    pub crossings: u32,
    pub inside_length: f64,
}

/// Sums [`Polygon::traverse`] over every polygon.
pub fn traverse_all(polygons: &[Polygon], a: Vec2, b: Vec2) -> Traversal {
    polygons.iter().fold(Traversal::default(), |acc, poly| {
        let t = poly.traverse(a, b);
        Traversal {
            crossings: acc.crossings + t.crossings,
            inside_length: acc.inside_length + t.inside_length,
        }
    })
}
