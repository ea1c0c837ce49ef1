//! Planar geometry: points, polygonal windows with holes, and the Lambert
//! conformal conic projection used to bring lon/lat into a kilometer plane.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod projection;
pub mod geojson;

pub use projection::{LambertConformalConic, ProjectionSpec};

/// A location in the projected plane, in kilometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }
}

/// Euclidean distance in the plane.
pub fn distance(p: PlanarPoint, q: PlanarPoint) -> f64 {
    (p.x - q.x).hypot(p.y - q.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl BoundingBox {
    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, p: PlanarPoint) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    fn of_points<'a>(pts: impl IntoIterator<Item = &'a PlanarPoint>) -> Self {
        let mut b = BoundingBox {
            xmin: f64::INFINITY,
            xmax: f64::NEG_INFINITY,
            ymin: f64::INFINITY,
            ymax: f64::NEG_INFINITY,
        };
        for p in pts {
            b.xmin = b.xmin.min(p.x);
            b.xmax = b.xmax.max(p.x);
            b.ymin = b.ymin.min(p.y);
            b.ymax = b.ymax.max(p.y);
        }
        b
    }
}

/// Signed shoelace area of a ring (positive when counter-clockwise).
pub fn signed_ring_area(ring: &[PlanarPoint]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    // Shift to the first vertex so large projected coordinates do not cancel.
    let o = ring[0];
    let mut acc = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        acc += (a.x - o.x) * (b.y - o.y) - (b.x - o.x) * (a.y - o.y);
    }
    0.5 * acc
}

/// Polygonal observation window: one outer ring plus optional holes.
///
/// Rings are stored open (the closing vertex is not repeated). Area and bounding
/// box are computed once at construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Window {
    rings: Vec<Vec<PlanarPoint>>,
    area: f64,
    bbox: BoundingBox,
}

impl Window {
    /// Builds a window from an outer ring and holes, validating that every ring
    /// has at least three non-collinear vertices and no self-intersections.
    pub fn new(outer: Vec<PlanarPoint>, holes: Vec<Vec<PlanarPoint>>) -> Result<Self> {
        let mut rings = Vec::with_capacity(1 + holes.len());
        rings.push(outer);
        rings.extend(holes);
        for (k, ring) in rings.iter_mut().enumerate() {
            normalize_ring(ring);
            if ring.len() < 3 {
                return Err(Error::DegenerateGeometry(format!(
                    "ring {k} has {} distinct vertices, need at least 3",
                    ring.len()
                )));
            }
            if let Some(p) = ring.iter().find(|p| !p.is_finite()) {
                return Err(Error::DegenerateGeometry(format!(
                    "ring {k} has a non-finite vertex ({}, {})",
                    p.x, p.y
                )));
            }
            let a = signed_ring_area(ring).abs();
            let b = BoundingBox::of_points(ring.iter());
            if a <= 1e-12 * (b.width() * b.height()).max(f64::MIN_POSITIVE) {
                return Err(Error::DegenerateGeometry(format!("ring {k} is collinear")));
            }
            if let Some((i, j)) = first_self_intersection(ring) {
                return Err(Error::DegenerateGeometry(format!(
                    "ring {k} self-intersects at edges {i} and {j}"
                )));
            }
        }
        let outer_area = signed_ring_area(&rings[0]).abs();
        let holes_area: f64 = rings[1..].iter().map(|r| signed_ring_area(r).abs()).sum();
        let area = outer_area - holes_area;
        if area <= 0.0 {
            return Err(Error::DegenerateGeometry(format!(
                "holes cover the outer ring (net area {area})"
            )));
        }
        let bbox = BoundingBox::of_points(rings.iter().flatten());
        Ok(Self { rings, area, bbox })
    }

    pub fn rectangle(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self> {
        Self::new(
            vec![
                PlanarPoint::new(xmin, ymin),
                PlanarPoint::new(xmax, ymin),
                PlanarPoint::new(xmax, ymax),
                PlanarPoint::new(xmin, ymax),
            ],
            Vec::new(),
        )
    }

    pub fn unit_square() -> Self {
        Self::rectangle(0.0, 1.0, 0.0, 1.0).expect("unit square is valid")
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn outer(&self) -> &[PlanarPoint] {
        &self.rings[0]
    }

    pub fn holes(&self) -> &[Vec<PlanarPoint>] {
        &self.rings[1..]
    }

    pub fn rings(&self) -> &[Vec<PlanarPoint>] {
        &self.rings
    }

    /// Even-odd membership over all rings. Points lying on any edge are inside.
    pub fn contains(&self, p: PlanarPoint) -> bool {
        if !self.bbox.contains(p) {
            return false;
        }
        let mut inside = false;
        for ring in &self.rings {
            let n = ring.len();
            let mut j = n - 1;
            for i in 0..n {
                let a = ring[i];
                let b = ring[j];
                if on_segment(p, a, b) {
                    return true;
                }
                if (a.y > p.y) != (b.y > p.y) {
                    let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                    if p.x < x_cross {
                        inside = !inside;
                    }
                }
                j = i;
            }
        }
        inside
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        let rings: Vec<Vec<PlanarPoint>> = self
            .rings
            .iter()
            .map(|r| r.iter().map(|p| p.translate(dx, dy)).collect())
            .collect();
        let bbox = BoundingBox::of_points(rings.iter().flatten());
        Self {
            rings,
            area: self.area,
            bbox,
        }
    }

    /// Largest distance between two bounding-box corners.
    pub fn diameter(&self) -> f64 {
        self.bbox.diagonal()
    }
}

/// Net window area (outer ring minus holes).
pub fn polygon_area(w: &Window) -> f64 {
    w.area()
}

/// Drops a repeated closing vertex and consecutive duplicates.
fn normalize_ring(ring: &mut Vec<PlanarPoint>) {
    ring.dedup();
    while ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
}

fn on_segment(p: PlanarPoint, a: PlanarPoint, b: PlanarPoint) -> bool {
    let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    let len2 = (b.x - a.x).powi(2) + (b.y - a.y).powi(2);
    let scale = len2.max(f64::MIN_POSITIVE);
    if cross.abs() > 1e-12 * scale {
        return false;
    }
    let dot = (p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y);
    dot >= 0.0 && dot <= len2
}

fn orient(a: PlanarPoint, b: PlanarPoint, c: PlanarPoint) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_intersect(p1: PlanarPoint, p2: PlanarPoint, q1: PlanarPoint, q2: PlanarPoint) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(p1, q1, q2))
        || (d2 == 0.0 && on_segment(p2, q1, q2))
        || (d3 == 0.0 && on_segment(q1, p1, p2))
        || (d4 == 0.0 && on_segment(q2, p1, p2))
}

/// Returns the first pair of non-adjacent intersecting edges, if any.
///
/// Edges are swept in x order so typical coastline rings with thousands of
/// vertices stay cheap.
fn first_self_intersection(ring: &[PlanarPoint]) -> Option<(usize, usize)> {
    let n = ring.len();
    let edge = |i: usize| (ring[i], ring[(i + 1) % n]);
    let mut order: Vec<usize> = (0..n).collect();
    let xmin = |i: usize| {
        let (a, b) = edge(i);
        a.x.min(b.x)
    };
    order.sort_by(|&i, &j| xmin(i).total_cmp(&xmin(j)));
    let mut active: Vec<usize> = Vec::new();
    for &i in &order {
        let (a, b) = edge(i);
        let lo = a.x.min(b.x);
        active.retain(|&j| {
            let (c, d) = edge(j);
            c.x.max(d.x) >= lo
        });
        for &j in &active {
            let adjacent = (i + 1) % n == j || (j + 1) % n == i;
            if adjacent {
                continue;
            }
            let (c, d) = edge(j);
            if segments_intersect(a, b, c, d) {
                return Some((i.min(j), i.max(j)));
            }
        }
        active.push(i);
    }
    None
}
