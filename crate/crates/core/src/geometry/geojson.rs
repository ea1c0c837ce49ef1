//! Reading and writing windows as GeoJSON-style polygons.
//!
//! Accepted inputs are a bare `Polygon` geometry, a `Feature` whose geometry is
//! a polygon, or a `FeatureCollection` holding exactly one such feature. The
//! first ring is the outer boundary, later rings are holes.

use std::path::Path;

use serde_json::{json, Value};

use super::{LambertConformalConic, PlanarPoint, Window};
use crate::error::{Error, Result};

/// How the coordinates of an input file are to be interpreted.
#[derive(Debug, Clone, Copy)]
pub enum CoordinateUnits {
    Kilometers,
    /// Longitude/latitude degrees, projected on load.
    LonLat(LambertConformalConic),
}

impl CoordinateUnits {
    pub fn to_planar(&self, a: f64, b: f64) -> Result<PlanarPoint> {
        match self {
            CoordinateUnits::Kilometers => Ok(PlanarPoint::new(a, b)),
            CoordinateUnits::LonLat(lcc) => lcc.project(a, b),
        }
    }
}

pub fn window_from_str(text: &str, units: CoordinateUnits) -> Result<Window> {
    let value: Value = serde_json::from_str(text)?;
    let coords = polygon_coordinates(&value)?;
    let mut rings = Vec::new();
    for ring in coords {
        let ring = ring
            .as_array()
            .ok_or_else(|| Error::Parse("polygon ring is not an array".into()))?;
        let mut pts = Vec::with_capacity(ring.len());
        for pos in ring {
            let pair = pos
                .as_array()
                .filter(|a| a.len() >= 2)
                .ok_or_else(|| Error::Parse("position must be an array of two numbers".into()))?;
            let a = pair[0].as_f64().ok_or_else(|| Error::Parse("non-numeric coordinate".into()))?;
            let b = pair[1].as_f64().ok_or_else(|| Error::Parse("non-numeric coordinate".into()))?;
            pts.push(units.to_planar(a, b)?);
        }
        rings.push(pts);
    }
    if rings.is_empty() {
        return Err(Error::Parse("polygon has no rings".into()));
    }
    let outer = rings.remove(0);
    Window::new(outer, rings)
}

pub fn read_window(path: &Path, units: CoordinateUnits) -> Result<Window> {
    let text = std::fs::read_to_string(path)?;
    window_from_str(&text, units)
}

/// Serializes a window as a kilometer-coordinate `Polygon` with closed rings.
pub fn window_to_value(w: &Window) -> Value {
    let rings: Vec<Value> = w
        .rings()
        .iter()
        .map(|r| {
            let mut pts: Vec<Value> = r.iter().map(|p| json!([p.x, p.y])).collect();
            pts.push(json!([r[0].x, r[0].y]));
            Value::Array(pts)
        })
        .collect();
    json!({ "type": "Polygon", "coordinates": rings })
}

fn polygon_coordinates(v: &Value) -> Result<&Vec<Value>> {
    let kind = v.get("type").and_then(Value::as_str).unwrap_or("");
    match kind {
        "Polygon" => v
            .get("coordinates")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Parse("Polygon without coordinates".into())),
        "Feature" => polygon_coordinates(
            v.get("geometry")
                .ok_or_else(|| Error::Parse("Feature without geometry".into()))?,
        ),
        "FeatureCollection" => {
            let feats = v
                .get("features")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Parse("FeatureCollection without features".into()))?;
            match feats.as_slice() {
                [only] => polygon_coordinates(only),
                _ => Err(Error::Parse(format!(
                    "expected exactly one polygon feature, found {}",
                    feats.len()
                ))),
            }
        }
        other => Err(Error::Parse(format!("unsupported GeoJSON type {other:?}"))),
    }
}
