//! JSON model artifacts and training audit logs.
//!
//! Floats are written in shortest round-trip decimal form and parsed
//! exactly, so `load(save(a)) == a` and save→load→save is byte-stable.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SvannError};
use crate::geom::DistanceMetric;
use crate::nn::NetworkSpec;
use crate::partition::ZoneMap;
use crate::train::{ModelSite, SiteAudit, TrainOutcome, TrainingRegime};

pub const FORMAT_VERSION: u32 = 1;
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub toolkit_version: String,
}

impl Provenance {
    pub fn for_config<T: Serialize>(config: &T) -> Result<Self> {
        Ok(Provenance { config_hash: config_hash(config)?, toolkit_version: TOOLKIT_VERSION.to_string() })
    }
}

/// SHA-256 of the compact JSON encoding of `config`, hex encoded.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub network: NetworkSpec,
    pub metric: DistanceMetric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zones: Option<ZoneMap>,
    /// Default clamp distance for distance-weighted voting with these sites.
    pub default_d_min: f64,
    pub sites: Vec<ModelSite>,
    pub provenance: Provenance,
}

impl ModelArtifact {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(SvannError::Data(format!(
                "unsupported artifact format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.network.validate()?;
        for site in &self.sites {
            site.params.validate()?;
            if !site.params.matches(&self.network) {
                return Err(SvannError::Data(format!("site {} does not match the network shape", site.site_id)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let a: ModelArtifact = serde_json::from_str(text)?;
        a.validate()?;
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?)
    }
}

/// Per-site record of the training samples used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingAudit {
    pub config_hash: String,
    pub regime: TrainingRegime,
    pub sites: Vec<SiteAudit>,
    pub warnings: Vec<String>,
}

impl TrainingAudit {
    pub fn from_outcome(outcome: &TrainOutcome, regime: TrainingRegime, config_hash: String) -> Self {
        TrainingAudit { config_hash, regime, sites: outcome.audits.clone(), warnings: outcome.warnings.clone() }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| SvannError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| SvannError::io(path, e))
}
