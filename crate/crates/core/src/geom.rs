//! Geographic points, distance functions and an exact 2-D kd-tree.
//!
//! The index answers k-nearest and closed-ball queries; its answers are
//! always identical to a linear scan under the same [`DistanceMetric`],
//! including the order of equidistant points (ties go to the lower sample id).

use serde::{Deserialize, Serialize};

use crate::error::{Result, SvannError};

/// Mean spherical Earth radius used by the haversine metric, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// A location in planar (meters) or geodesic (x = longitude, y = latitude, degrees) space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
}

impl GeoPoint {
    /// Builds a point, rejecting NaN and infinite coordinates.
    pub fn new(x: f64, y: f64) -> Result<Self> {
        let p = GeoPoint { x, y };
        p.check_finite()?;
        Ok(p)
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.x.is_finite() && self.y.is_finite() {
            Ok(())
        } else {
            Err(SvannError::InvalidInput(format!("non-finite coordinate ({}, {})", self.x, self.y)))
        }
    }

    fn coord(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.x
        } else {
            self.y
        }
    }
}

/// Distance function between two [`GeoPoint`]s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    PlanarEuclidean,
    /// Great-circle distance on a sphere of radius [`EARTH_RADIUS_M`].
    Haversine,
}

impl DistanceMetric {
    /// Checks that `p` is admissible: finite, and within lat/lon ranges for haversine.
    pub fn validate(&self, p: &GeoPoint) -> Result<()> {
        p.check_finite()?;
        if *self == DistanceMetric::Haversine && !((-180.0..=180.0).contains(&p.x) && (-90.0..=90.0).contains(&p.y)) {
            return Err(SvannError::InvalidInput(format!("longitude/latitude ({}, {}) out of range", p.x, p.y)));
        }
        Ok(())
    }

    /// Distance without validation. Callers must have validated both points.
    pub(crate) fn raw(&self, a: &GeoPoint, b: &GeoPoint) -> f64 {
        match self {
            DistanceMetric::PlanarEuclidean => {
                let dx = a.x - b.x;
                let dy = a.y - b.y;
                (dx * dx + dy * dy).sqrt()
            }
            DistanceMetric::Haversine => {
                let phi1 = a.y.to_radians();
                let phi2 = b.y.to_radians();
                let half_dphi = (phi2 - phi1) / 2.0;
                let half_dlambda = (b.x - a.x).to_radians() / 2.0;
                let s1 = half_dphi.sin();
                let s2 = half_dlambda.sin();
                let h = (s1 * s1 + phi1.cos() * phi2.cos() * s2 * s2).clamp(0.0, 1.0);
                2.0 * EARTH_RADIUS_M * h.sqrt().atan2((1.0 - h).sqrt())
            }
        }
    }

    /// A lower bound on the distance from `q` to any point whose coordinate on
    /// `axis` lies on the far side of `split`.
    fn axis_lower_bound(&self, q: &GeoPoint, axis: usize, split: f64) -> f64 {
        // shaved slightly so rounding in `raw` can never make the bound exceed a true distance
        const SLACK: f64 = 1.0 - 1e-9;
        let gap = (q.coord(axis) - split).abs();
        match self {
            DistanceMetric::PlanarEuclidean => gap * SLACK,
            DistanceMetric::Haversine if axis == 1 => EARTH_RADIUS_M * gap.to_radians() * SLACK,
            // a longitude gap does not bound great-circle distance near the poles
            DistanceMetric::Haversine => 0.0,
        }
    }
}

/// Distance between two points under `metric`.
pub fn distance(a: &GeoPoint, b: &GeoPoint, metric: DistanceMetric) -> Result<f64> {
    metric.validate(a)?;
    metric.validate(b)?;
    Ok(metric.raw(a, b))
}

/// One query hit: the id of an indexed point and its distance to the query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: u64,
    pub distance: f64,
}

fn neighbor_order(a: &Neighbor, b: &Neighbor) -> std::cmp::Ordering {
    a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(&b.id))
}

const LEAF_SIZE: usize = 8;

/// Immutable kd-tree over `(GeoPoint, id)` pairs with median splits.
///
/// The tree is stored implicitly: every sub-slice `[lo, hi)` of `entries`
/// longer than [`LEAF_SIZE`] has its splitting point at the midpoint, with
/// smaller coordinates on the left.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    entries: Vec<(GeoPoint, u64)>,
    metric: DistanceMetric,
}

impl SpatialIndex {
    pub fn build(points: impl IntoIterator<Item = (GeoPoint, u64)>, metric: DistanceMetric) -> Result<Self> {
        let mut entries: Vec<(GeoPoint, u64)> = points.into_iter().collect();
        for (p, _) in &entries {
            metric.validate(p)?;
        }
        let n = entries.len();
        Self::build_range(&mut entries, 0, n, 0);
        Ok(SpatialIndex { entries, metric })
    }

    fn build_range(entries: &mut [(GeoPoint, u64)], lo: usize, hi: usize, depth: usize) {
        if hi - lo <= LEAF_SIZE {
            return;
        }
        let axis = depth % 2;
        let mid = lo + (hi - lo) / 2;
        entries[lo..hi].select_nth_unstable_by(mid - lo, |a, b| a.0.coord(axis).total_cmp(&b.0.coord(axis)).then_with(|| a.1.cmp(&b.1)));
        Self::build_range(entries, lo, mid, depth + 1);
        Self::build_range(entries, mid + 1, hi, depth + 1);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    /// The `k` nearest points to `q`, ascending by distance, ties by id.
    pub fn knn(&self, q: &GeoPoint, k: usize) -> Result<Vec<Neighbor>> {
        if k == 0 || k > self.entries.len() {
            return Err(SvannError::InvalidArgument(format!("k = {k} must lie in 1..={}", self.entries.len())));
        }
        self.metric.validate(q)?;
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        self.knn_range(q, k, 0, self.entries.len(), 0, &mut best);
        Ok(best)
    }

    fn knn_offer(best: &mut Vec<Neighbor>, k: usize, cand: Neighbor) {
        if best.len() == k {
            match best.last() {
                Some(worst) if neighbor_order(&cand, worst).is_lt() => {}
                _ => return,
            }
        }
        let pos = best.partition_point(|n| neighbor_order(n, &cand).is_lt());
        best.insert(pos, cand);
        best.truncate(k);
    }

    fn knn_range(&self, q: &GeoPoint, k: usize, lo: usize, hi: usize, depth: usize, best: &mut Vec<Neighbor>) {
        if hi - lo <= LEAF_SIZE {
            for (p, id) in &self.entries[lo..hi] {
                let distance = self.metric.raw(q, p);
                Self::knn_offer(best, k, Neighbor { id: *id, distance });
            }
            return;
        }
        let axis = depth % 2;
        let mid = lo + (hi - lo) / 2;
        let (split_point, split_id) = self.entries[mid];
        let split = split_point.coord(axis);
        let query_left = q.coord(axis) < split;
        let (near, far) = if query_left { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.knn_range(q, k, near.0, near.1, depth + 1, best);
        Self::knn_offer(best, k, Neighbor { id: split_id, distance: self.metric.raw(q, &split_point) });
        let bound = self.metric.axis_lower_bound(q, axis, split);
        let prune = best.len() == k && best.last().is_some_and(|w| bound > w.distance);
        if !prune {
            self.knn_range(q, k, far.0, far.1, depth + 1, best);
        }
    }

    /// All points with distance ≤ `radius` from `q`, ascending by distance, ties by id.
    pub fn within(&self, q: &GeoPoint, radius: f64) -> Result<Vec<Neighbor>> {
        if radius.is_nan() || radius < 0.0 {
            return Err(SvannError::InvalidArgument(format!("radius {radius} must be non-negative")));
        }
        self.metric.validate(q)?;
        let mut hits = Vec::new();
        self.within_range(q, radius, 0, self.entries.len(), 0, &mut hits);
        hits.sort_by(neighbor_order);
        Ok(hits)
    }

    fn within_range(&self, q: &GeoPoint, radius: f64, lo: usize, hi: usize, depth: usize, hits: &mut Vec<Neighbor>) {
        if hi - lo <= LEAF_SIZE {
            for (p, id) in &self.entries[lo..hi] {
                let distance = self.metric.raw(q, p);
                if distance <= radius {
                    hits.push(Neighbor { id: *id, distance });
                }
            }
            return;
        }
        let axis = depth % 2;
        let mid = lo + (hi - lo) / 2;
        let (split_point, split_id) = self.entries[mid];
        let split = split_point.coord(axis);
        let distance = self.metric.raw(q, &split_point);
        if distance <= radius {
            hits.push(Neighbor { id: split_id, distance });
        }
        let bound = self.metric.axis_lower_bound(q, axis, split);
        let query_left = q.coord(axis) < split;
        if query_left || bound <= radius {
            self.within_range(q, radius, lo, mid, depth + 1, hits);
        }
        if !query_left || bound <= radius {
            self.within_range(q, radius, mid + 1, hi, depth + 1, hits);
        }
    }
}
