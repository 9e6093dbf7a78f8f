//! Training orchestration: the one-size-fits-all baseline and the spatial
//! regimes (fixed partition, distance bound, k-nearest, distance weighted).
//!
//! Every site of a run starts from `Parameters::init(spec, seed)` and visits
//! its training samples in a per-epoch permutation drawn from `(seed, epoch)`.
//! Training sets are kept in dataset order before shuffling, so a site whose
//! training set is the whole dataset reproduces the baseline bit-for-bit.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Result, SvannError};
use crate::geom::{DistanceMetric, GeoPoint, SpatialIndex};
use crate::nn::{distance_weighted_rate, NetworkSpec, Parameters};
use crate::partition::{ZoneId, ZoneMap};

pub const DEFAULT_LEARNING_RATE: f64 = 0.05;
pub const DEFAULT_EPOCHS: usize = 200;

/// Which samples train which site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegimeKind {
    Osfa,
    FixedPartition,
    DistanceBound { radius: f64 },
    Knn { k: usize },
    DistanceWeighted { d_min: f64 },
}

impl RegimeKind {
    pub fn name(&self) -> &'static str {
        match self {
            RegimeKind::Osfa => "osfa",
            RegimeKind::FixedPartition => "fixed_partition",
            RegimeKind::DistanceBound { .. } => "distance_bound",
            RegimeKind::Knn { .. } => "knn",
            RegimeKind::DistanceWeighted { .. } => "distance_weighted",
        }
    }
}

fn default_learning_rate() -> f64 {
    DEFAULT_LEARNING_RATE
}

fn default_epochs() -> usize {
    DEFAULT_EPOCHS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingRegime {
    #[serde(flatten)]
    pub kind: RegimeKind,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
}

impl TrainingRegime {
    pub fn new(kind: RegimeKind) -> Self {
        TrainingRegime { kind, learning_rate: DEFAULT_LEARNING_RATE, epochs: DEFAULT_EPOCHS }
    }

    pub fn with_learning_rate(mut self, learning_rate: f64) -> Self {
        self.learning_rate = learning_rate;
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(SvannError::InvalidArgument(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(SvannError::InvalidArgument("epochs must be positive".into()));
        }
        match self.kind {
            RegimeKind::DistanceBound { radius } if radius.is_nan() || radius <= 0.0 => {
                Err(SvannError::InvalidArgument(format!("distance bound {radius} must be positive")))
            }
            RegimeKind::Knn { k: 0 } => Err(SvannError::InvalidArgument("k must be at least 1".into())),
            RegimeKind::DistanceWeighted { d_min } if d_min.is_nan() || d_min <= 0.0 => {
                Err(SvannError::InvalidArgument(format!("d_min {d_min} must be positive")))
            }
            _ => Ok(()),
        }
    }

    fn expect(&self, wanted: &str) -> Result<()> {
        self.validate()?;
        if self.kind.name() == wanted {
            Ok(())
        } else {
            Err(SvannError::InvalidArgument(format!("expected a {wanted} regime, got {}", self.kind.name())))
        }
    }
}

/// Where a site lives: a zone of a [`ZoneMap`] or a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Anchor {
    Zone { zone: ZoneId },
    Point { x: f64, y: f64 },
}

impl Anchor {
    pub fn point(p: GeoPoint) -> Self {
        Anchor::Point { x: p.x, y: p.y }
    }

    pub fn as_point(&self) -> Option<GeoPoint> {
        match self {
            Anchor::Point { x, y } => Some(GeoPoint { x: *x, y: *y }),
            Anchor::Zone { .. } => None,
        }
    }
}

/// One trained network and where it applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSite {
    pub site_id: usize,
    pub anchor: Anchor,
    pub regime: TrainingRegime,
    pub seed: u64,
    pub params: Parameters,
}

/// Which samples trained a site and, for distance-weighted training, at what rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteAudit {
    pub site_id: usize,
    pub sample_ids: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub effective_rates: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub sites: Vec<ModelSite>,
    pub audits: Vec<SiteAudit>,
    pub warnings: Vec<String>,
}

enum Rates<'a> {
    Uniform(f64),
    PerMember(&'a [f64]),
}

/// Permutation of `0..len` used for `epoch`.
pub fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    order
}

fn check_compatible(data: &Dataset, spec: &NetworkSpec) -> Result<()> {
    spec.validate()?;
    if data.feature_dim() != spec.input_dim() {
        return Err(SvannError::InvalidInput(format!(
            "dataset has {} features but the network expects {}",
            data.feature_dim(),
            spec.input_dim()
        )));
    }
    if let Some(s) = data.samples().iter().find(|s| s.label >= spec.class_count()) {
        return Err(SvannError::InvalidInput(format!(
            "sample {} has label {} but the network has {} classes",
            s.id,
            s.label,
            spec.class_count()
        )));
    }
    Ok(())
}

/// Per-sample descent over `members` (dataset positions, ascending).
fn fit(data: &Dataset, members: &[usize], rates: Rates<'_>, spec: &NetworkSpec, epochs: usize, seed: u64) -> Result<Parameters> {
    let mut params = Parameters::init(spec, seed)?;
    let samples = data.samples();
    for epoch in 0..epochs {
        for j in epoch_order(members.len(), seed, epoch) {
            let sample = &samples[members[j]];
            let (_, g) = params.backprop(&sample.features, sample.label)?;
            let rate = match rates {
                Rates::Uniform(r) => r,
                Rates::PerMember(r) => r[j],
            };
            params.apply_update(&g, rate)?;
        }
    }
    Ok(params)
}

fn audit(data: &Dataset, site_id: usize, members: &[usize], rates: Option<Vec<f64>>) -> SiteAudit {
    SiteAudit { site_id, sample_ids: members.iter().map(|&i| data.samples()[i].id).collect(), effective_rates: rates }
}

fn position_index(data: &Dataset, metric: DistanceMetric) -> Result<SpatialIndex> {
    SpatialIndex::build(data.samples().iter().enumerate().map(|(i, s)| (s.loc, i as u64)), metric)
}

fn require_anchors(anchors: &[GeoPoint]) -> Result<()> {
    if anchors.is_empty() {
        Err(SvannError::InvalidArgument("at least one anchor is required".into()))
    } else {
        Ok(())
    }
}

/// A single site trained on every sample, anchored at the dataset centroid.
pub fn train_osfa(data: &Dataset, spec: &NetworkSpec, regime: &TrainingRegime, seed: u64) -> Result<TrainOutcome> {
    regime.expect("osfa")?;
    check_compatible(data, spec)?;
    let members: Vec<usize> = (0..data.len()).collect();
    let params = fit(data, &members, Rates::Uniform(regime.learning_rate), spec, regime.epochs, seed)?;
    Ok(TrainOutcome {
        sites: vec![ModelSite { site_id: 0, anchor: Anchor::point(data.centroid()), regime: *regime, seed, params }],
        audits: vec![audit(data, 0, &members, None)],
        warnings: Vec::new(),
    })
}

/// One site per non-empty zone, trained only on that zone's samples.
pub fn train_fixed_partition(
    data: &Dataset,
    spec: &NetworkSpec,
    zones: &ZoneMap,
    regime: &TrainingRegime,
    seed: u64,
) -> Result<TrainOutcome> {
    regime.expect("fixed_partition")?;
    check_compatible(data, spec)?;
    let assigned = data.samples().iter().map(|s| zones.assign(&s.loc)).collect::<Result<Vec<ZoneId>>>()?;
    let mut groups = Vec::new();
    let mut warnings = Vec::new();
    for zone in zones.zones() {
        let members: Vec<usize> = (0..data.len()).filter(|&i| assigned[i] == zone.id).collect();
        if members.is_empty() {
            warnings.push(format!("zone {} has no training samples; no site trained", zone.id));
        } else {
            groups.push((zone.id, members));
        }
    }
    if groups.is_empty() {
        return Err(SvannError::EmptyTraining);
    }
    let trained = groups
        .par_iter()
        .map(|(_, members)| fit(data, members, Rates::Uniform(regime.learning_rate), spec, regime.epochs, seed))
        .collect::<Result<Vec<Parameters>>>()?;
    let mut sites = Vec::with_capacity(groups.len());
    let mut audits = Vec::with_capacity(groups.len());
    for (site_id, ((zone, members), params)) in groups.into_iter().zip(trained).enumerate() {
        sites.push(ModelSite { site_id, anchor: Anchor::Zone { zone }, regime: *regime, seed, params });
        audits.push(audit(data, site_id, &members, None));
    }
    Ok(TrainOutcome { sites, audits, warnings })
}

fn train_neighborhoods(
    data: &Dataset,
    spec: &NetworkSpec,
    anchors: &[GeoPoint],
    regime: &TrainingRegime,
    seed: u64,
    neighborhoods: Vec<Vec<usize>>,
) -> Result<TrainOutcome> {
    let mut warnings = Vec::new();
    let mut groups = Vec::new();
    for (anchor, members) in anchors.iter().zip(neighborhoods) {
        if members.is_empty() {
            warnings.push(format!("anchor ({}, {}) has no training samples in range; no site trained", anchor.x, anchor.y));
        } else {
            groups.push((*anchor, members));
        }
    }
    if groups.is_empty() {
        return Err(SvannError::EmptyTraining);
    }
    let trained = groups
        .par_iter()
        .map(|(_, members)| fit(data, members, Rates::Uniform(regime.learning_rate), spec, regime.epochs, seed))
        .collect::<Result<Vec<Parameters>>>()?;
    let mut sites = Vec::with_capacity(groups.len());
    let mut audits = Vec::with_capacity(groups.len());
    for (site_id, ((anchor, members), params)) in groups.into_iter().zip(trained).enumerate() {
        sites.push(ModelSite { site_id, anchor: Anchor::point(anchor), regime: *regime, seed, params });
        audits.push(audit(data, site_id, &members, None));
    }
    Ok(TrainOutcome { sites, audits, warnings })
}

/// One site per anchor, trained on the samples within the regime's radius.
pub fn train_distance_bound(
    data: &Dataset,
    spec: &NetworkSpec,
    anchors: &[GeoPoint],
    metric: DistanceMetric,
    regime: &TrainingRegime,
    seed: u64,
) -> Result<TrainOutcome> {
    regime.expect("distance_bound")?;
    check_compatible(data, spec)?;
    require_anchors(anchors)?;
    let RegimeKind::DistanceBound { radius } = regime.kind else { unreachable!() };
    let index = position_index(data, metric)?;
    let neighborhoods = anchors
        .iter()
        .map(|a| {
            let mut members: Vec<usize> = index.within(a, radius)?.iter().map(|n| n.id as usize).collect();
            members.sort_unstable();
            Ok(members)
        })
        .collect::<Result<Vec<_>>>()?;
    train_neighborhoods(data, spec, anchors, regime, seed, neighborhoods)
}

/// One site per anchor, trained on the anchor's k nearest samples.
pub fn train_knn(
    data: &Dataset,
    spec: &NetworkSpec,
    anchors: &[GeoPoint],
    metric: DistanceMetric,
    regime: &TrainingRegime,
    seed: u64,
) -> Result<TrainOutcome> {
    regime.expect("knn")?;
    check_compatible(data, spec)?;
    require_anchors(anchors)?;
    let RegimeKind::Knn { k } = regime.kind else { unreachable!() };
    let index = position_index(data, metric)?;
    let neighborhoods = anchors
        .iter()
        .map(|a| {
            let mut members: Vec<usize> = index.knn(a, k)?.iter().map(|n| n.id as usize).collect();
            members.sort_unstable();
            Ok(members)
        })
        .collect::<Result<Vec<_>>>()?;
    train_neighborhoods(data, spec, anchors, regime, seed, neighborhoods)
}

/// One site per anchor, each trained on every sample at rate `η / max(d, d_min)²`.
pub fn train_distance_weighted(
    data: &Dataset,
    spec: &NetworkSpec,
    anchors: &[GeoPoint],
    metric: DistanceMetric,
    regime: &TrainingRegime,
    seed: u64,
) -> Result<TrainOutcome> {
    regime.expect("distance_weighted")?;
    check_compatible(data, spec)?;
    require_anchors(anchors)?;
    let RegimeKind::DistanceWeighted { d_min } = regime.kind else { unreachable!() };
    let members: Vec<usize> = (0..data.len()).collect();
    let rates = anchors
        .iter()
        .map(|a| {
            data.samples()
                .iter()
                .map(|s| distance_weighted_rate(regime.learning_rate, crate::geom::distance(a, &s.loc, metric)?, d_min))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let trained = rates
        .par_iter()
        .map(|r| fit(data, &members, Rates::PerMember(r), spec, regime.epochs, seed))
        .collect::<Result<Vec<Parameters>>>()?;
    let mut sites = Vec::with_capacity(anchors.len());
    let mut audits = Vec::with_capacity(anchors.len());
    for (site_id, ((anchor, params), r)) in anchors.iter().zip(trained).zip(rates).enumerate() {
        sites.push(ModelSite { site_id, anchor: Anchor::point(*anchor), regime: *regime, seed, params });
        audits.push(audit(data, site_id, &members, Some(r)));
    }
    Ok(TrainOutcome { sites, audits, warnings: Vec::new() })
}

/// Spatial context needed by the regimes: zones, anchors and the distance metric.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpatialLayout {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zones: Option<ZoneMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchors: Option<Vec<GeoPoint>>,
    #[serde(default)]
    pub metric: DistanceMetric,
}

impl SpatialLayout {
    /// Explicit anchors, or the zone centroids when none are given.
    pub fn resolved_anchors(&self) -> Result<Vec<GeoPoint>> {
        match (&self.anchors, &self.zones) {
            (Some(a), _) => Ok(a.clone()),
            (None, Some(z)) => Ok(zone_centroids(z)),
            (None, None) => Err(SvannError::Config("point-anchored regimes need anchors or a zone map".into())),
        }
    }
}

/// Centroid of every zone, in zone order.
pub fn zone_centroids(zones: &ZoneMap) -> Vec<GeoPoint> {
    zones.zones().iter().map(|z| z.bounds.centroid()).collect()
}

/// Dispatches on the regime kind.
pub fn train(data: &Dataset, spec: &NetworkSpec, regime: &TrainingRegime, layout: &SpatialLayout, seed: u64) -> Result<TrainOutcome> {
    match regime.kind {
        RegimeKind::Osfa => train_osfa(data, spec, regime, seed),
        RegimeKind::FixedPartition => {
            let zones = layout.zones.as_ref().ok_or_else(|| SvannError::Config("fixed_partition needs a zone map".into()))?;
            train_fixed_partition(data, spec, zones, regime, seed)
        }
        RegimeKind::DistanceBound { .. } => train_distance_bound(data, spec, &layout.resolved_anchors()?, layout.metric, regime, seed),
        RegimeKind::Knn { .. } => train_knn(data, spec, &layout.resolved_anchors()?, layout.metric, regime, seed),
        RegimeKind::DistanceWeighted { .. } => {
            train_distance_weighted(data, spec, &layout.resolved_anchors()?, layout.metric, regime, seed)
        }
    }
}

/// Fraction of `samples` whose predicted class equals the label.
pub fn accuracy(params: &Parameters, samples: &[crate::dataset::LabeledSample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for s in samples {
        if params.predict_class(&s.features)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}
