//! Seeded generator of spatially heterogeneous labeled data, where each
//! region applies its own linear labeling rule to its own feature distribution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabeledSample};
use crate::error::{Result, SvannError};
use crate::geom::GeoPoint;
use crate::partition::{Rect, Zone, ZoneId, ZoneMap};

/// `label = 1` iff `weights · features + bias > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRule {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearRule {
    pub fn label(&self, features: &[f64]) -> usize {
        let score: f64 = self.weights.iter().zip(features).map(|(w, f)| w * f).sum::<f64>() + self.bias;
        usize::from(score > 0.0)
    }

    pub fn negated(&self) -> LinearRule {
        LinearRule { weights: self.weights.iter().map(|w| -w).collect(), bias: -self.bias }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub bounds: Rect,
    pub rule: LinearRule,
    /// Per-dimension Gaussian mean of the features.
    pub feature_mean: Vec<f64>,
    /// Gaussian standard deviation shared by all dimensions.
    pub feature_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialScenario {
    pub extent: Rect,
    pub regions: Vec<Region>,
    pub n_samples: usize,
    pub feature_dim: usize,
    /// Probability of flipping each label, in `[0, 0.5)`.
    pub noise: f64,
    pub seed: u64,
}

impl SpatialScenario {
    /// The regions as a zone map (zone ids follow region order).
    pub fn zone_map(&self) -> Result<ZoneMap> {
        let zones = self.regions.iter().enumerate().map(|(i, r)| Zone { id: ZoneId(i), bounds: r.bounds }).collect();
        ZoneMap::from_zones(self.extent, zones)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.noise) {
            return Err(SvannError::Config(format!("noise {} must lie in [0, 0.5)", self.noise)));
        }
        if self.n_samples == 0 || self.feature_dim == 0 {
            return Err(SvannError::Config("scenario needs samples and features".into()));
        }
        for (i, r) in self.regions.iter().enumerate() {
            if r.rule.weights.len() != self.feature_dim || r.feature_mean.len() != self.feature_dim {
                return Err(SvannError::Config(format!("region {i} does not match feature_dim {}", self.feature_dim)));
            }
            if !(r.feature_scale > 0.0 && r.feature_scale.is_finite()) {
                return Err(SvannError::Config(format!("region {i} needs a positive feature scale")));
            }
        }
        self.zone_map().map(|_| ())
    }
}

/// Draws `n_samples` samples with ids `0..n`: uniform location, the owning
/// region's Gaussian features and rule label, then a label flip with probability `noise`.
pub fn generate(s: &SpatialScenario) -> Result<Dataset> {
    s.validate()?;
    let zones = s.zone_map()?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    let ext = s.extent;
    let mut samples = Vec::with_capacity(s.n_samples);
    for id in 0..s.n_samples {
        let loc = GeoPoint { x: rng.random_range(ext.min_x()..ext.max_x()), y: rng.random_range(ext.min_y()..ext.max_y()) };
        let region = &s.regions[zones.assign(&loc)?.0];
        let features: Vec<f64> = region.feature_mean.iter().map(|m| m + region.feature_scale * standard.sample(&mut rng)).collect();
        let mut label = region.rule.label(&features);
        if rng.random::<f64>() < s.noise {
            label = 1 - label;
        }
        samples.push(LabeledSample { id: id as u64, loc, features, label });
    }
    Dataset::new(samples)
}

pub const SIMPSON_TRAIN: usize = 800;
pub const SIMPSON_TEST: usize = 200;
pub const SIMPSON_NOISE: f64 = 0.05;

/// Two side-by-side regions over `[0, 2] × [0, 1]` whose rules are negations of each other.
pub fn simpson_scenario(seed: u64, noise: f64) -> SpatialScenario {
    let rule = LinearRule { weights: vec![1.0, -1.0], bias: 0.0 };
    let region = |bounds: Rect, rule: LinearRule| Region { bounds, rule, feature_mean: vec![0.0, 0.0], feature_scale: 1.0 };
    SpatialScenario {
        extent: Rect::new(0.0, 0.0, 2.0, 1.0).expect("valid extent"),
        regions: vec![
            region(Rect::new(0.0, 0.0, 1.0, 1.0).expect("valid"), rule.clone()),
            region(Rect::new(1.0, 0.0, 2.0, 1.0).expect("valid"), rule.negated()),
        ],
        n_samples: SIMPSON_TRAIN + SIMPSON_TEST,
        feature_dim: 2,
        noise,
        seed,
    }
}

/// A generated benchmark: data split 80/20 and the zone map of its regions.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub train: Dataset,
    pub test: Dataset,
    pub zones: ZoneMap,
    pub scenario: SpatialScenario,
}

/// Splits a generated scenario into its first 80% (train) and remaining 20% (test).
pub fn split_benchmark(scenario: SpatialScenario) -> Result<Benchmark> {
    let data = generate(&scenario)?;
    let n_train = scenario.n_samples * 4 / 5;
    let train = Dataset::new(data.samples()[..n_train].to_vec())?;
    let test = Dataset::new(data.samples()[n_train..].to_vec())?;
    Ok(Benchmark { train, test, zones: scenario.zone_map()?, scenario })
}

/// The canonical two-zone flipped-rule benchmark: 800 train / 200 test, noise 0.05.
pub fn simpson_benchmark(seed: u64) -> Result<Benchmark> {
    split_benchmark(simpson_scenario(seed, SIMPSON_NOISE))
}
