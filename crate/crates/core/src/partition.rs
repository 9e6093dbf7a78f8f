//! Zone maps: disjoint, exhaustive rectangular partitions of the study area.
//!
//! Each zone owns the half-open box `[min_x, max_x) × [min_y, max_y)`; a zone
//! whose max edge coincides with the extent's max edge also owns that edge, so
//! every point of the closed extent belongs to exactly one zone.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SvannError};
use crate::geom::GeoPoint;

/// Identifier of a zone within its [`ZoneMap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ZoneId(pub usize);

impl std::fmt::Display for ZoneId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Axis-aligned rectangle, `min < max` on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRect")]
pub struct Rect {
    min_x: f64,
    min_y: f64,
    max_x: f64,
    max_y: f64,
}

#[derive(Deserialize)]
struct RawRect {
    min_x: f64,
    min_y: f64,
    max_x: f64,
    max_y: f64,
}

impl TryFrom<RawRect> for Rect {
    type Error = SvannError;

    fn try_from(r: RawRect) -> Result<Self> {
        Rect::new(r.min_x, r.min_y, r.max_x, r.max_y)
    }
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        let finite = [min_x, min_y, max_x, max_y].iter().all(|v| v.is_finite());
        if !finite || min_x >= max_x || min_y >= max_y {
            return Err(SvannError::InvalidArgument(format!("degenerate rectangle [{min_x}, {max_x}] x [{min_y}, {max_y}]")));
        }
        Ok(Rect { min_x, min_y, max_x, max_y })
    }

    pub fn unit() -> Self {
        Rect { min_x: 0.0, min_y: 0.0, max_x: 1.0, max_y: 1.0 }
    }

    pub fn min_x(&self) -> f64 {
        self.min_x
    }
    pub fn min_y(&self) -> f64 {
        self.min_y
    }
    pub fn max_x(&self) -> f64 {
        self.max_x
    }
    pub fn max_y(&self) -> f64 {
        self.max_y
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn centroid(&self) -> GeoPoint {
        GeoPoint { x: (self.min_x + self.max_x) / 2.0, y: (self.min_y + self.max_y) / 2.0 }
    }

    /// Closed containment.
    pub fn contains(&self, p: &GeoPoint) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    fn interiors_overlap(&self, other: &Rect) -> bool {
        self.min_x < other.max_x && other.min_x < self.max_x && self.min_y < other.max_y && other.min_y < self.max_y
    }

    fn contains_rect(&self, other: &Rect) -> bool {
        other.min_x >= self.min_x && other.max_x <= self.max_x && other.min_y >= self.min_y && other.max_y <= self.max_y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: ZoneId,
    pub bounds: Rect,
}

/// A validated tiling of `extent` by zones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawZoneMap")]
pub struct ZoneMap {
    extent: Rect,
    zones: Vec<Zone>,
}

#[derive(Deserialize)]
struct RawZoneMap {
    extent: Rect,
    zones: Vec<Zone>,
}

impl TryFrom<RawZoneMap> for ZoneMap {
    type Error = SvannError;

    fn try_from(raw: RawZoneMap) -> Result<Self> {
        ZoneMap::from_zones(raw.extent, raw.zones)
    }
}

impl ZoneMap {
    /// `rows × cols` equal cells over `extent`, ids in row-major order from the min-y row.
    pub fn grid(extent: Rect, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(SvannError::InvalidArgument(format!("grid needs at least one row and column, got {rows}x{cols}")));
        }
        // shared edges are computed once so neighbouring cells agree bit-for-bit
        let edges = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
            (0..=n)
                .map(|i| match i {
                    0 => lo,
                    i if i == n => hi,
                    i => lo + (hi - lo) * (i as f64) / (n as f64),
                })
                .collect()
        };
        let xs = edges(extent.min_x, extent.max_x, cols);
        let ys = edges(extent.min_y, extent.max_y, rows);
        let mut zones = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                zones.push(Zone { id: ZoneId(r * cols + c), bounds: Rect::new(xs[c], ys[r], xs[c + 1], ys[r + 1])? });
            }
        }
        Ok(ZoneMap { extent, zones })
    }

    /// Builds a zone map from user rectangles, checking that they tile the extent.
    pub fn from_zones(extent: Rect, zones: Vec<Zone>) -> Result<Self> {
        if zones.is_empty() {
            return Err(SvannError::Config("zone map has no zones".into()));
        }
        for (i, z) in zones.iter().enumerate() {
            if !extent.contains_rect(&z.bounds) {
                return Err(SvannError::Config(format!("zone {} extends beyond the extent", z.id)));
            }
            for other in &zones[i + 1..] {
                if other.id == z.id {
                    return Err(SvannError::Config(format!("duplicate zone id {}", z.id)));
                }
                if z.bounds.interiors_overlap(&other.bounds) {
                    return Err(SvannError::Config(format!("zones {} and {} overlap", z.id, other.id)));
                }
            }
        }
        let covered: f64 = zones.iter().map(|z| z.bounds.area()).sum();
        if (covered - extent.area()).abs() > 1e-9 * extent.area() {
            return Err(SvannError::Config(format!("zones cover area {covered} but the extent has area {}", extent.area())));
        }
        Ok(ZoneMap { extent, zones })
    }

    pub fn extent(&self) -> &Rect {
        &self.extent
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

    pub fn zone(&self, id: ZoneId) -> Option<&Zone> {
        self.zones.iter().find(|z| z.id == id)
    }

    fn owns(&self, zone: &Zone, p: &GeoPoint) -> bool {
        let b = &zone.bounds;
        let in_x = p.x >= b.min_x && (p.x < b.max_x || (p.x == b.max_x && b.max_x == self.extent.max_x));
        let in_y = p.y >= b.min_y && (p.y < b.max_y || (p.y == b.max_y && b.max_y == self.extent.max_y));
        in_x && in_y
    }

    /// The single zone owning `p`.
    pub fn assign(&self, p: &GeoPoint) -> Result<ZoneId> {
        p.check_finite()?;
        if !self.extent.contains(p) {
            return Err(SvannError::OutOfExtent { x: p.x, y: p.y });
        }
        self.zones
            .iter()
            .find(|z| self.owns(z, p))
            .map(|z| z.id)
            .ok_or_else(|| SvannError::InvalidInput(format!("no zone owns ({}, {})", p.x, p.y)))
    }

    /// Number of zones whose half-open box contains `p`; exactly 1 for every point of the extent.
    pub fn owner_count(&self, p: &GeoPoint) -> usize {
        self.zones.iter().filter(|z| self.owns(z, p)).count()
    }
}
