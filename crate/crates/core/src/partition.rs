//! Spatial levels as polygon partitions, hexagonal grid generation and
//! point-to-zone assignment.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, BBox, Point};

/// One zone of a spatial level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub zone_id: String,
    pub level: String,
    pub ring: Vec<Point>,
}

impl Zone {
    pub fn new(zone_id: impl Into<String>, level: impl Into<String>, ring: Vec<Point>) -> Result<Self> {
        let z = Zone {
            zone_id: zone_id.into(),
            level: level.into(),
            ring,
        };
        z.validate()?;
        Ok(z)
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.zone_id;
        if self.ring.len() < 4 {
            return Err(Error::Geometry(format!("zone {id}: ring needs at least 4 vertices")));
        }
        if !geom::is_closed(&self.ring) {
            return Err(Error::Geometry(format!("zone {id}: ring is not closed")));
        }
        if self.ring.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::Geometry(format!("zone {id}: non-finite coordinate")));
        }
        let a = geom::signed_area(&self.ring);
        if !a.is_finite() || a == 0.0 {
            return Err(Error::Geometry(format!("zone {id}: zero area")));
        }
        if geom::is_self_intersecting(&self.ring) {
            return Err(Error::Geometry(format!("zone {id}: ring self-intersects")));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        geom::signed_area(&self.ring).abs()
    }

    pub fn bbox(&self) -> BBox {
        BBox::of(&self.ring)
    }

    pub fn centroid(&self) -> Point {
        let a = geom::signed_area(&self.ring);
        let (mut cx, mut cy) = (0.0, 0.0);
        for w in self.ring.windows(2) {
            let c = w[0].x * w[1].y - w[1].x * w[0].y;
            cx += (w[0].x + w[1].x) * c;
            cy += (w[0].y + w[1].y) * c;
        }
        Point::new(cx / (6.0 * a), cy / (6.0 * a))
    }
}

/// True iff `p` lies inside or on the boundary of `z`.
pub fn point_in_zone(p: Point, z: &Zone) -> bool {
    geom::contains_closed(p, &z.ring)
}

/// Uniform bucket grid over zone bounding boxes.
#[derive(Debug, Clone)]
struct ZoneIndex {
    bounds: BBox,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
}

impl ZoneIndex {
    fn build(zones: &[Zone]) -> Option<ZoneIndex> {
        let bounds = zones.iter().map(Zone::bbox).reduce(|a, b| a.union(&b))?;
        let side = ((zones.len() as f64).sqrt().ceil() as usize).clamp(1, 512);
        let (nx, ny) = (side, side);
        let mut cells = vec![Vec::new(); nx * ny];
        let idx = ZoneIndex {
            bounds,
            nx,
            ny,
            cells: Vec::new(),
        };
        for (zi, z) in zones.iter().enumerate() {
            let b = z.bbox();
            let (x0, y0) = idx.cell_of(b.min_x, b.min_y);
            let (x1, y1) = idx.cell_of(b.max_x, b.max_y);
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    cells[cy * nx + cx].push(zi);
                }
            }
        }
        Some(ZoneIndex { cells, ..idx })
    }

    fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let fx = if self.bounds.width() > 0.0 {
            (x - self.bounds.min_x) / self.bounds.width()
        } else {
            0.0
        };
        let fy = if self.bounds.height() > 0.0 {
            (y - self.bounds.min_y) / self.bounds.height()
        } else {
            0.0
        };
        let cx = ((fx * self.nx as f64).floor().max(0.0) as usize).min(self.nx - 1);
        let cy = ((fy * self.ny as f64).floor().max(0.0) as usize).min(self.ny - 1);
        (cx, cy)
    }

    fn candidates(&self, p: Point) -> &[usize] {
        if !self.bounds.contains(p) {
            return &[];
        }
        let (cx, cy) = self.cell_of(p.x, p.y);
        &self.cells[cy * self.nx + cx]
    }
}

/// A spatial level: named set of interior-disjoint zones.
#[derive(Debug, Clone)]
pub struct SpatialPartition {
    pub level: String,
    /// Sorted by `zone_id`.
    zones: Vec<Zone>,
    index: Option<ZoneIndex>,
}

impl SpatialPartition {
    pub fn new(level: impl Into<String>, mut zones: Vec<Zone>) -> Result<Self> {
        let level = level.into();
        let mut seen = HashSet::new();
        for z in &zones {
            z.validate()?;
            if !seen.insert(z.zone_id.clone()) {
                return Err(Error::Geometry(format!("duplicate zone id `{}`", z.zone_id)));
            }
        }
        zones.sort_by(|a, b| a.zone_id.cmp(&b.zone_id));
        let index = ZoneIndex::build(&zones);
        Ok(SpatialPartition { level, zones, index })
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn zone(&self, id: &str) -> Option<&Zone> {
        self.zones
            .binary_search_by(|z| z.zone_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.zones[i])
    }

    /// Index into [`zones`](Self::zones) of the containing zone. Shared
    /// boundaries resolve to the smallest zone id.
    pub fn assign_index(&self, p: Point) -> Option<usize> {
        let idx = self.index.as_ref()?;
        // candidate lists are in ascending zone order, so the first hit wins
        idx.candidates(p)
            .iter()
            .copied()
            .find(|&zi| point_in_zone(p, &self.zones[zi]))
    }

    pub fn assign_zone(&self, p: Point) -> Option<&str> {
        self.assign_index(p).map(|i| self.zones[i].zone_id.as_str())
    }

    pub fn assign_batch(&self, points: &[Point]) -> Vec<Option<usize>> {
        use rayon::prelude::*;
        points.par_iter().map(|&p| self.assign_index(p)).collect()
    }

    pub fn bbox(&self) -> Option<BBox> {
        self.index.as_ref().map(|i| i.bounds)
    }
}

/// Available as a free function to mirror [`point_in_zone`].
pub fn assign_zone(p: Point, part: &SpatialPartition) -> Option<&str> {
    part.assign_zone(p)
}

#[derive(Debug, Serialize, Deserialize)]
struct ZoneRecord {
    zone_id: String,
    level: String,
    ring: Vec<Point>,
}

/// Load a polygon file (JSON array of `{zone_id, level, ring}`).
/// Zones of other levels are skipped when `level` is given.
pub fn load_partition(path: &Path, level: Option<&str>) -> Result<SpatialPartition> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_partition(&bytes, level)
}

pub fn parse_partition(bytes: &[u8], level: Option<&str>) -> Result<SpatialPartition> {
    let recs: Vec<ZoneRecord> =
        serde_json::from_slice(bytes).map_err(|e| Error::Geometry(format!("polygon file: {e}")))?;
    let name = match level {
        Some(l) => l.to_string(),
        None => recs
            .first()
            .map(|r| r.level.clone())
            .unwrap_or_else(|| "unnamed".into()),
    };
    let zones = recs
        .into_iter()
        .filter(|r| r.level == name)
        .map(|r| Zone::new(r.zone_id, r.level, r.ring))
        .collect::<Result<Vec<_>>>()?;
    SpatialPartition::new(name, zones)
}

pub fn partition_to_json(part: &SpatialPartition) -> String {
    let recs: Vec<ZoneRecord> = part
        .zones
        .iter()
        .map(|z| ZoneRecord {
            zone_id: z.zone_id.clone(),
            level: z.level.clone(),
            ring: z.ring.clone(),
        })
        .collect();
    serde_json::to_string_pretty(&recs).expect("zones serialize")
}

/// Flat-top hexagonal grid parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HexGridSpec {
    pub circumradius_m: f64,
    pub origin: Point,
    pub bounding_box: BBox,
}

pub const DEFAULT_HEX_CIRCUMRADIUS_M: f64 = 250.0;
pub const HEX_LEVEL: &str = "hex_grid";

impl HexGridSpec {
    pub fn new(circumradius_m: f64, origin: Point, bounding_box: BBox) -> Result<Self> {
        let s = HexGridSpec {
            circumradius_m,
            origin,
            bounding_box,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if !(self.circumradius_m > 0.0 && self.circumradius_m.is_finite()) {
            return Err(Error::Parameter("hex circumradius must be positive".into()));
        }
        let b = &self.bounding_box;
        if !(b.max_x > b.min_x && b.max_y > b.min_y) {
            return Err(Error::Parameter("hex bounding box is degenerate".into()));
        }
        Ok(())
    }
}

fn hexagon(center: Point, r: f64) -> Vec<Point> {
    let mut ring: Vec<Point> = (0..6)
        .map(|k| {
            let a = std::f64::consts::PI / 3.0 * k as f64;
            Point::new(center.x + r * a.cos(), center.y + r * a.sin())
        })
        .collect();
    ring.push(ring[0]);
    ring
}

fn hex_intersects_box(ring: &[Point], b: &BBox) -> bool {
    let hb = BBox::of(ring);
    if !hb.intersects(b) {
        return false;
    }
    let corners = [
        Point::new(b.min_x, b.min_y),
        Point::new(b.max_x, b.min_y),
        Point::new(b.max_x, b.max_y),
        Point::new(b.min_x, b.max_y),
        Point::new(b.min_x, b.min_y),
    ];
    ring.iter().any(|p| b.contains(*p))
        || corners[..4].iter().any(|c| geom::contains_closed(*c, ring))
        || geom::intersection_area(ring, &corners) > 0.0
}

/// Tile the bounding box with flat-top hexagons; every cell touching the box
/// is kept. Ids are `hex_<col>_<row>` counted from the lower-left cell.
pub fn generate_hex_grid(spec: &HexGridSpec) -> Result<SpatialPartition> {
    spec.validate()?;
    let r = spec.circumradius_m;
    let b = spec.bounding_box;
    if 2.0 * r > b.width() && 2.0 * r > b.height() {
        log::warn!("hex circumradius {r} exceeds the bounding box; emitting a single cell");
        let c = Point::new((b.min_x + b.max_x) / 2.0, (b.min_y + b.max_y) / 2.0);
        let z = Zone::new("hex_0_0", HEX_LEVEL, hexagon(c, r))?;
        return SpatialPartition::new(HEX_LEVEL, vec![z]);
    }
    let dx = 1.5 * r;
    let dy = 3f64.sqrt() * r;
    let c0 = ((b.min_x - spec.origin.x - r) / dx).floor() as i64;
    let c1 = ((b.max_x - spec.origin.x + r) / dx).ceil() as i64;
    let q0 = ((b.min_y - spec.origin.y - dy) / dy).floor() as i64;
    let q1 = ((b.max_y - spec.origin.y + dy) / dy).ceil() as i64;
    let mut cells = Vec::new();
    for c in c0..=c1 {
        for q in q0..=q1 {
            let offset = if c.rem_euclid(2) == 1 { dy / 2.0 } else { 0.0 };
            let center = Point::new(spec.origin.x + c as f64 * dx, spec.origin.y + q as f64 * dy + offset);
            let ring = hexagon(center, r);
            if hex_intersects_box(&ring, &b) {
                cells.push((c, q, ring));
            }
        }
    }
    let min_c = cells.iter().map(|c| c.0).min().unwrap_or(0);
    let min_q = cells.iter().map(|c| c.1).min().unwrap_or(0);
    let zones = cells
        .into_iter()
        .map(|(c, q, ring)| Zone::new(format!("hex_{}_{}", c - min_c, q - min_q), HEX_LEVEL, ring))
        .collect::<Result<Vec<_>>>()?;
    SpatialPartition::new(HEX_LEVEL, zones)
}
