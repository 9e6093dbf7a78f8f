//! Combining site predictions: zonal routing with equal votes, or hard votes
//! from every site weighted by inverse distance.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SvannError};
use crate::geom::{DistanceMetric, GeoPoint};
use crate::nn::argmax;
use crate::partition::ZoneMap;
use crate::train::{Anchor, ModelSite};

pub const DEFAULT_VOTE_EXPONENT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vote {
    pub site_id: usize,
    pub predicted_class: usize,
    pub class_probs: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteRule {
    #[default]
    Majority,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictionStrategy {
    Zonal {
        #[serde(default)]
        vote: VoteRule,
    },
    DistanceWeighted {
        exponent: f64,
        d_min: f64,
    },
}

impl PredictionStrategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PredictionStrategy::Zonal { .. } => Ok(()),
            PredictionStrategy::DistanceWeighted { exponent, d_min } => {
                if !(exponent > 0.0 && exponent.is_finite()) {
                    return Err(SvannError::InvalidArgument(format!("vote exponent {exponent} must be positive")));
                }
                if !(d_min > 0.0 && d_min.is_finite()) {
                    return Err(SvannError::InvalidArgument(format!("d_min {d_min} must be positive")));
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PredictionStrategy::Zonal { .. } => "zonal",
            PredictionStrategy::DistanceWeighted { .. } => "distance_weighted",
        }
    }
}

/// Result of combining votes for one test sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub votes: Vec<Vote>,
    /// Per-class vote weight (distance-weighted) or vote tally (zonal).
    pub class_weights: Vec<f64>,
}

fn vote(site: &ModelSite, x: &[f64], distance: Option<f64>) -> Result<Vote> {
    let class_probs = site.params.forward(x)?;
    Ok(Vote { site_id: site.site_id, predicted_class: argmax(&class_probs), class_probs, distance })
}

fn class_count(sites: &[&ModelSite]) -> usize {
    sites.iter().map(|s| s.params.class_count()).max().unwrap_or(0)
}

/// Routes `loc` to its zone and combines the votes of the sites anchored there.
///
/// Point-anchored sites count as members of the zone containing their anchor.
pub fn predict_zonal(sites: &[ModelSite], zones: &ZoneMap, rule: VoteRule, x: &[f64], loc: &GeoPoint) -> Result<Prediction> {
    let zone = zones.assign(loc)?;
    let in_zone: Vec<&ModelSite> = sites
        .iter()
        .filter(|s| match s.anchor {
            Anchor::Zone { zone: z } => z == zone,
            Anchor::Point { x, y } => zones.assign(&GeoPoint { x, y }).ok() == Some(zone),
        })
        .collect();
    if in_zone.is_empty() {
        return Err(SvannError::NoModelForZone(zone));
    }
    let votes = in_zone.iter().map(|s| vote(s, x, None)).collect::<Result<Vec<Vote>>>()?;
    let classes = class_count(&in_zone);
    let class_weights = match rule {
        VoteRule::Majority => {
            let mut tally = vec![0.0; classes];
            for v in &votes {
                tally[v.predicted_class] += 1.0;
            }
            tally
        }
        VoteRule::Mean => {
            let mut mean = vec![0.0; classes];
            for v in &votes {
                for (m, p) in mean.iter_mut().zip(&v.class_probs) {
                    *m += p;
                }
            }
            let n = votes.len() as f64;
            mean.iter_mut().for_each(|m| *m /= n);
            mean
        }
    };
    Ok(Prediction { class: argmax(&class_weights), votes, class_weights })
}

/// Location used for a site's distance: its point, or its zone's centroid.
fn site_location(site: &ModelSite, zones: Option<&ZoneMap>) -> Result<GeoPoint> {
    match site.anchor {
        Anchor::Point { x, y } => Ok(GeoPoint { x, y }),
        Anchor::Zone { zone } => zones
            .and_then(|zm| zm.zone(zone))
            .map(|z| z.bounds.centroid())
            .ok_or_else(|| SvannError::Config(format!("site {} is anchored in zone {zone} but no zone map defines it", site.site_id))),
    }
}

/// Every site votes for its predicted class with weight `1 / max(d, d_min)^exponent`.
pub fn predict_distance_weighted(
    sites: &[ModelSite],
    zones: Option<&ZoneMap>,
    metric: DistanceMetric,
    x: &[f64],
    loc: &GeoPoint,
    exponent: f64,
    d_min: f64,
) -> Result<Prediction> {
    PredictionStrategy::DistanceWeighted { exponent, d_min }.validate()?;
    if sites.is_empty() {
        return Err(SvannError::InvalidInput("no model sites to vote".into()));
    }
    let votes = sites
        .iter()
        .map(|s| {
            let d = crate::geom::distance(&site_location(s, zones)?, loc, metric)?;
            vote(s, x, Some(d))
        })
        .collect::<Result<Vec<Vote>>>()?;
    let all: Vec<&ModelSite> = sites.iter().collect();
    let mut class_weights = vec![0.0; class_count(&all)];
    for v in &votes {
        let d = v.distance.expect("distance-weighted votes carry a distance");
        class_weights[v.predicted_class] += inverse_distance_weight(d, exponent, d_min);
    }
    Ok(Prediction { class: argmax(&class_weights), votes, class_weights })
}

/// `1 / max(d, d_min)^exponent`.
pub fn inverse_distance_weight(distance: f64, exponent: f64, d_min: f64) -> f64 {
    1.0 / distance.max(d_min).powf(exponent)
}

/// Applies `strategy` to one test sample.
pub fn predict(
    sites: &[ModelSite],
    zones: Option<&ZoneMap>,
    metric: DistanceMetric,
    strategy: &PredictionStrategy,
    x: &[f64],
    loc: &GeoPoint,
) -> Result<Prediction> {
    match *strategy {
        PredictionStrategy::Zonal { vote } => {
            let zm = zones.ok_or_else(|| SvannError::Config("zonal prediction needs a zone map".into()))?;
            predict_zonal(sites, zm, vote, x, loc)
        }
        PredictionStrategy::DistanceWeighted { exponent, d_min } => {
            predict_distance_weighted(sites, zones, metric, x, loc, exponent, d_min)
        }
    }
}
