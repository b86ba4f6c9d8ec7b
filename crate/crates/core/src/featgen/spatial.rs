use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, BBox, Point};
use crate::partition::SpatialPartition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Point,
    Line,
    Polygon,
}

impl GeometryKind {
    fn as_str(self) -> &'static str {
        match self {
            GeometryKind::Point => "point",
            GeometryKind::Line => "line",
            GeometryKind::Polygon => "polygon",
        }
    }

    /// Suffix of the derived per-zone feature.
    pub fn feature_suffix(self) -> &'static str {
        match self {
            GeometryKind::Point => "count",
            GeometryKind::Line => "length_m",
            GeometryKind::Polygon => "area_m2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerElements {
    Points(Vec<Point>),
    Lines(Vec<Vec<Point>>),
    Polygons(Vec<Vec<Point>>),
}

/// A GIS layer of one geometry kind.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialLayer {
    pub name: String,
    pub elements: LayerElements,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    name: String,
    geometry_kind: GeometryKind,
    elements: serde_json::Value,
}

impl SpatialLayer {
    pub fn points(name: impl Into<String>, pts: Vec<Point>) -> Self {
        SpatialLayer {
            name: name.into(),
            elements: LayerElements::Points(pts),
        }
    }

    pub fn lines(name: impl Into<String>, lines: Vec<Vec<Point>>) -> Result<Self> {
        if lines.iter().any(|l| l.len() < 2) {
            return Err(Error::Geometry("polyline needs at least 2 vertices".into()));
        }
        Ok(SpatialLayer {
            name: name.into(),
            elements: LayerElements::Lines(lines),
        })
    }

    pub fn polygons(name: impl Into<String>, rings: Vec<Vec<Point>>) -> Result<Self> {
        for r in &rings {
            if r.len() < 4 || !geom::is_closed(r) || geom::signed_area(r) == 0.0 {
                return Err(Error::Geometry(
                    "layer polygon must be a closed ring with non-zero area".into(),
                ));
            }
        }
        Ok(SpatialLayer {
            name: name.into(),
            elements: LayerElements::Polygons(rings),
        })
    }

    pub fn kind(&self) -> GeometryKind {
        match self.elements {
            LayerElements::Points(_) => GeometryKind::Point,
            LayerElements::Lines(_) => GeometryKind::Line,
            LayerElements::Polygons(_) => GeometryKind::Polygon,
        }
    }

    pub fn feature_name(&self) -> String {
        format!("{}_{}", self.name, self.kind().feature_suffix())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let f: LayerFile = serde_json::from_slice(bytes).map_err(|e| Error::Geometry(format!("layer file: {e}")))?;
        let bad = |e: serde_json::Error| Error::Geometry(format!("layer `{}`: {e}", f.name));
        match f.geometry_kind {
            GeometryKind::Point => Ok(SpatialLayer::points(
                f.name.clone(),
                serde_json::from_value(f.elements.clone()).map_err(bad)?,
            )),
            GeometryKind::Line => {
                SpatialLayer::lines(f.name.clone(), serde_json::from_value(f.elements.clone()).map_err(bad)?)
            }
            GeometryKind::Polygon => {
                SpatialLayer::polygons(f.name.clone(), serde_json::from_value(f.elements.clone()).map_err(bad)?)
            }
        }
    }

    pub fn to_json(&self) -> String {
        let elements = match &self.elements {
            LayerElements::Points(p) => serde_json::to_value(p),
            LayerElements::Lines(l) => serde_json::to_value(l),
            LayerElements::Polygons(r) => serde_json::to_value(r),
        }
        .expect("geometry serializes");
        serde_json::to_string(&LayerFile {
            name: self.name.clone(),
            geometry_kind: self.kind(),
            elements,
        })
        .expect("layer serializes")
    }
}

pub fn load_layer(path: &Path) -> Result<SpatialLayer> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    SpatialLayer::from_json(&bytes)
}

fn kind_error(expected: GeometryKind, layer: &SpatialLayer) -> Error {
    Error::GeometryKind {
        expected: expected.as_str().into(),
        found: layer.kind().as_str().into(),
    }
}

/// Number of layer points per zone (closed boundaries, smallest-id tie-break).
pub fn spatial_point_count(layer: &SpatialLayer, part: &SpatialPartition) -> Result<BTreeMap<String, u64>> {
    let LayerElements::Points(points) = &layer.elements else {
        return Err(kind_error(GeometryKind::Point, layer));
    };
    let mut out: BTreeMap<String, u64> = part.zones().iter().map(|z| (z.zone_id.clone(), 0)).collect();
    for zi in part.assign_batch(points).into_iter().flatten() {
        *out.get_mut(&part.zones()[zi].zone_id).expect("zone present") += 1;
    }
    Ok(out)
}

/// Total polyline length clipped to each zone, in meters.
pub fn spatial_line_length(layer: &SpatialLayer, part: &SpatialPartition) -> Result<BTreeMap<String, f64>> {
    let LayerElements::Lines(lines) = &layer.elements else {
        return Err(kind_error(GeometryKind::Line, layer));
    };
    let boxes: Vec<BBox> = lines.iter().map(|l| BBox::of(l)).collect();
    Ok(part
        .zones()
        .iter()
        .map(|z| {
            let zb = z.bbox();
            let total = lines
                .iter()
                .zip(&boxes)
                .filter(|(_, b)| b.intersects(&zb))
                .map(|(l, _)| geom::clipped_polyline_length(l, &z.ring))
                .sum();
            (z.zone_id.clone(), total)
        })
        .collect())
}

/// Total layer polygon area intersecting each zone, in square meters.
pub fn spatial_polygon_area(layer: &SpatialLayer, part: &SpatialPartition) -> Result<BTreeMap<String, f64>> {
    let LayerElements::Polygons(rings) = &layer.elements else {
        return Err(kind_error(GeometryKind::Polygon, layer));
    };
    let boxes: Vec<BBox> = rings.iter().map(|r| BBox::of(r)).collect();
    Ok(part
        .zones()
        .iter()
        .map(|z| {
            let zb = z.bbox();
            let total = rings
                .iter()
                .zip(&boxes)
                .filter(|(_, b)| b.intersects(&zb))
                .map(|(r, _)| geom::intersection_area(r, &z.ring))
                .sum();
            (z.zone_id.clone(), total)
        })
        .collect())
}

/// Static per-zone features: zone area plus one column per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialTable {
    pub names: Vec<String>,
    pub values: BTreeMap<String, Vec<f64>>,
}

pub fn spatial_table(layers: &[SpatialLayer], part: &SpatialPartition) -> Result<SpatialTable> {
    let mut names = vec!["zone_area_m2".to_string()];
    let mut values: BTreeMap<String, Vec<f64>> = part
        .zones()
        .iter()
        .map(|z| (z.zone_id.clone(), vec![z.area()]))
        .collect();
    for layer in layers {
        names.push(layer.feature_name());
        let per_zone: BTreeMap<String, f64> = match layer.kind() {
            GeometryKind::Point => spatial_point_count(layer, part)?
                .into_iter()
                .map(|(k, v)| (k, v as f64))
                .collect(),
            GeometryKind::Line => spatial_line_length(layer, part)?,
            GeometryKind::Polygon => spatial_polygon_area(layer, part)?,
        };
        for (zone, v) in per_zone {
            values.get_mut(&zone).expect("zone present").push(v);
        }
    }
    Ok(SpatialTable { names, values })
}
