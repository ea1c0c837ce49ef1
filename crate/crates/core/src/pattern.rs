//! Point patterns, testimony aggregation and neighbor counting.

use std::collections::HashMap;
use std::io::Read;
use std::sync::Arc;

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::geojson::CoordinateUnits;
use crate::geometry::{distance, PlanarPoint, Window};
use crate::raster::PixelImage;

/// A finite set of points in a window, optionally with one numeric mark per point.
#[derive(Debug, Clone)]
pub struct PointPattern {
    points: Vec<PlanarPoint>,
    marks: Option<Vec<f64>>,
    window: Arc<Window>,
}

impl PointPattern {
    /// Strict constructor: any point outside the window is an error.
    pub fn new(points: Vec<PlanarPoint>, marks: Option<Vec<f64>>, window: Arc<Window>) -> Result<Self> {
        let outside = points.iter().filter(|p| !window.contains(**p)).count();
        if outside > 0 {
            return Err(Error::OutsideWindow { count: outside });
        }
        Self::check_marks(&points, marks.as_deref())?;
        Ok(Self { points, marks, window })
    }

    /// Drops points outside the window (and their marks) and reports how many
    /// were dropped.
    pub fn new_lenient(
        points: Vec<PlanarPoint>,
        marks: Option<Vec<f64>>,
        window: Arc<Window>,
    ) -> Result<(Self, usize)> {
        Self::check_marks(&points, marks.as_deref())?;
        let keep: Vec<bool> = points.iter().map(|p| window.contains(*p)).collect();
        let dropped = keep.iter().filter(|k| !**k).count();
        let points = points.into_iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| p).collect();
        let marks = marks.map(|m| m.into_iter().zip(&keep).filter(|(_, k)| **k).map(|(v, _)| v).collect());
        if dropped > 0 {
            warn!("dropped {dropped} point(s) outside the window");
        }
        Ok((Self { points, marks, window }, dropped))
    }

    pub fn empty(window: Arc<Window>) -> Self {
        Self {
            points: Vec::new(),
            marks: None,
            window,
        }
    }

    fn check_marks(points: &[PlanarPoint], marks: Option<&[f64]>) -> Result<()> {
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite point ({}, {})", p.x, p.y)));
        }
        if let Some(m) = marks {
            if m.len() != points.len() {
                return Err(Error::InvalidInput(format!(
                    "{} marks for {} points",
                    m.len(),
                    points.len()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("marks must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn points(&self) -> &[PlanarPoint] {
        &self.points
    }

    pub fn marks(&self) -> Option<&[f64]> {
        self.marks.as_deref()
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn window_arc(&self) -> &Arc<Window> {
        &self.window
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_marks(&self, marks: Vec<f64>) -> Result<Self> {
        Self::check_marks(&self.points, Some(&marks))?;
        Ok(Self {
            points: self.points.clone(),
            marks: Some(marks),
            window: self.window.clone(),
        })
    }

    pub fn without_marks(&self) -> Self {
        Self {
            points: self.points.clone(),
            marks: None,
            window: self.window.clone(),
        }
    }

    /// Shifts points and window together.
    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            points: self.points.iter().map(|p| p.translate(dx, dy)).collect(),
            marks: self.marks.clone(),
            window: Arc::new(self.window.translate(dx, dy)),
        }
    }

    /// Union of two patterns sharing a window.
    pub fn concat(&self, other: &PointPattern) -> Result<Self> {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let marks = match (&self.marks, &other.marks) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            (None, None) => None,
            _ => return Err(Error::InvalidInput("cannot join marked and unmarked patterns".into())),
        };
        Ok(Self {
            points,
            marks,
            window: self.window.clone(),
        })
    }
}

/// Points per unit area: `n / area(window)`.
pub fn average_intensity(p: &PointPattern) -> f64 {
    p.len() as f64 / p.window().area()
}

/// The witness locations of one reported event.
#[derive(Debug, Clone, Serialize)]
pub struct ObservationGroup {
    pub id: String,
    pub witness_points: Vec<PlanarPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Aggregated {
    Kept(PlanarPoint),
    /// Some hull vertex lies farther than the allowed radius from the centroid.
    Excluded { max_vertex_distance: f64 },
}

/// Convex hull (counter-clockwise, starting at the lowest-leftmost vertex,
/// collinear points removed).
pub fn convex_hull(points: &[PlanarPoint]) -> Vec<PlanarPoint> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: PlanarPoint, a: PlanarPoint, b: PlanarPoint| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut hull: Vec<PlanarPoint> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Area centroid of a simple polygon, or the vertex mean when it has no area.
fn hull_centroid(hull: &[PlanarPoint]) -> PlanarPoint {
    let n = hull.len();
    let mean = || {
        let (sx, sy) = hull.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        PlanarPoint::new(sx / n as f64, sy / n as f64)
    };
    if n < 3 {
        return mean();
    }
    let o = hull[0];
    let (mut a2, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (p, q) = (hull[i], hull[(i + 1) % n]);
        let (px, py, qx, qy) = (p.x - o.x, p.y - o.y, q.x - o.x, q.y - o.y);
        let c = px * qy - qx * py;
        a2 += c;
        cx += (px + qx) * c;
        cy += (py + qy) * c;
    }
    if a2.abs() <= f64::EPSILON * 1e3 {
        return mean();
    }
    PlanarPoint::new(o.x + cx / (3.0 * a2), o.y + cy / (3.0 * a2))
}

/// Reduces a group of witness locations to one event location: the centroid of
/// their convex hull, unless a hull vertex lies more than `max_radius` away.
pub fn aggregate_observation(group: &ObservationGroup, max_radius: f64) -> Result<Aggregated> {
    if group.witness_points.is_empty() {
        return Err(Error::InvalidInput(format!("observation group {} is empty", group.id)));
    }
    if !(max_radius > 0.0) {
        return Err(Error::InvalidInput(format!("max_radius must be positive, got {max_radius}")));
    }
    let hull = convex_hull(&group.witness_points);
    let c = hull_centroid(&hull);
    let far = hull.iter().map(|v| distance(c, *v)).fold(0.0, f64::max);
    Ok(if far > max_radius {
        Aggregated::Excluded { max_vertex_distance: far }
    } else {
        Aggregated::Kept(c)
    })
}

/// For every masked cell of `centers`, the number of sites within `radius`
/// (inclusive) of the cell center.
pub fn count_within(sites: &PointPattern, centers: &PixelImage, radius: f64) -> Result<PixelImage> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
    }
    let pts = sites.points();
    Ok(centers.fill(|_, u| {
        Some(
            pts.iter()
                .filter(|s| (s.x - u.x).abs() <= radius && (s.y - u.y).abs() <= radius)
                .filter(|s| distance(u, **s) <= radius)
                .count() as f64,
        )
    }))
}

/// One row of a points CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub id: String,
    pub point: PlanarPoint,
    pub mark: Option<f64>,
}

/// Reads `id,x,y[,mark]` (or `id,lon,lat[,mark]` when `units` is geographic).
pub fn read_point_records<R: Read>(input: R, units: &CoordinateUnits) -> Result<Vec<PointRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 {
        return Err(Error::Parse(format!(
            "points CSV needs columns id,x,y[,mark]; found {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let has_mark = headers.len() >= 4;
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: column {} is not a number", line + 2, i + 1)))
        };
        let point = units.to_planar(num(1)?, num(2)?)?;
        let mark = if has_mark { Some(num(3)?) } else { None };
        out.push(PointRecord {
            id: rec.get(0).unwrap_or("").to_string(),
            point,
            mark,
        });
    }
    Ok(out)
}

/// Reads a points CSV into a pattern, dropping (and counting) points outside
/// the window.
pub fn read_points<R: Read>(input: R, units: &CoordinateUnits, window: Arc<Window>) -> Result<(PointPattern, usize)> {
    let recs = read_point_records(input, units)?;
    let marks = if recs.iter().all(|r| r.mark.is_some()) && !recs.is_empty() {
        Some(recs.iter().map(|r| r.mark.unwrap()).collect())
    } else {
        None
    };
    PointPattern::new_lenient(recs.into_iter().map(|r| r.point).collect(), marks, window)
}

/// Groups `group_id,x,y` rows by id, in order of first appearance.
pub fn read_observation_groups<R: Read>(input: R, units: &CoordinateUnits) -> Result<Vec<ObservationGroup>> {
    let recs = read_point_records(input, units)?;
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<ObservationGroup> = Vec::new();
    for r in recs {
        let k = *index.entry(r.id.clone()).or_insert_with(|| {
            groups.push(ObservationGroup {
                id: r.id.clone(),
                witness_points: Vec::new(),
            });
            groups.len() - 1
        });
        groups[k].witness_points.push(r.point);
    }
    Ok(groups)
}

/// Writes `id,x,y[,mark]` with ids `1..=n`.
pub fn write_points<W: std::io::Write>(p: &PointPattern, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    match p.marks() {
        Some(_) => w.write_record(["id", "x", "y", "mark"])?,
        None => w.write_record(["id", "x", "y"])?,
    }
    for (i, pt) in p.points().iter().enumerate() {
        let mut row = vec![(i + 1).to_string(), pt.x.to_string(), pt.y.to_string()];
        if let Some(m) = p.marks() {
            row.push(m[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
