//! Spatial-variability-aware neural network ensembles.
//!
//! Instead of one global ("one size fits all", OSFA) network, a family of
//! networks is trained, each anchored at a zone or a location and each fed
//! the samples that are spatially relevant to it:
//!
//! * [`train::train_fixed_partition`]: one model per zone of a [`ZoneMap`];
//! * [`train::train_distance_bound`]: samples within a radius of each anchor;
//! * [`train::train_knn`]: the k nearest samples of each anchor;
//! * [`train::train_distance_weighted`]: all samples, with the learning rate
//!   scaled by the inverse squared sample-to-anchor distance.
//!
//! Predictions are combined per zone ([`predict::predict_zonal`]) or by
//! inverse-distance-weighted voting ([`predict::predict_distance_weighted`]),
//! and scored with precision, recall and F1 ([`eval`]).

pub mod artifact;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod geom;
pub mod nn;
pub mod partition;
pub mod predict;
pub mod suite;
pub mod synth;
pub mod train;

pub use artifact::ModelArtifact;
pub use dataset::{Dataset, LabeledSample};
pub use error::{ErrorKind, Result, SvannError};
pub use eval::{BoundingBox, Counts, EvalReport};
pub use experiment::ExperimentConfig;
pub use geom::{distance, DistanceMetric, GeoPoint, SpatialIndex};
pub use nn::{Activation, GradientSignal, NetworkSpec, Parameters};
pub use partition::{Rect, Zone, ZoneId, ZoneMap};
pub use predict::{PredictionStrategy, Vote, VoteRule};
pub use synth::SpatialScenario;
pub use train::{Anchor, ModelSite, RegimeKind, TrainingRegime};
