//! Desk-scale benchmark suite: the Simpson comparison over many seeds and
//! regime sweeps whose endpoints must reproduce the global baseline exactly.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SvannError};
use crate::eval;
use crate::geom::DistanceMetric;
use crate::nn::{Activation, NetworkSpec};
use crate::partition::ZoneMap;
use crate::predict::{self, PredictionStrategy, VoteRule, DEFAULT_VOTE_EXPONENT};
use crate::synth::{self, Benchmark};
use crate::train::{self, accuracy, ModelSite, RegimeKind, SpatialLayout, TrainingRegime};

/// Minimum mean macro-F1 the zonal SVANN arm must reach on the Simpson preset.
pub const SVANN_MIN_MEAN_MACRO_F1: f64 = 0.90;
/// Maximum mean macro-F1 the OSFA arm may reach on the Simpson preset.
pub const OSFA_MAX_MEAN_MACRO_F1: f64 = 0.75;
pub const MIN_SUITE_SEEDS: usize = 5;
/// The ten fixed seeds of the default benchmark run.
pub const DEFAULT_SUITE_SEEDS: [u64; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub noise: f64,
    /// Train SVANN with a single zone covering the extent instead of the two regions.
    pub single_zone: bool,
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            noise: synth::SIMPSON_NOISE,
            single_zone: false,
            hidden: crate::experiment::DEFAULT_HIDDEN,
            learning_rate: train::DEFAULT_LEARNING_RATE,
            epochs: train::DEFAULT_EPOCHS,
        }
    }
}

impl SuiteOptions {
    fn network(&self) -> Result<NetworkSpec> {
        NetworkSpec::new(vec![2, self.hidden, 2], Activation::Relu)
    }

    fn regime(&self, kind: RegimeKind) -> TrainingRegime {
        TrainingRegime::new(kind).with_learning_rate(self.learning_rate).with_epochs(self.epochs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub svann: ArmScores,
    pub osfa: ArmScores,
    /// Training accuracy of each SVANN site on its own zone's samples.
    pub svann_train_accuracy: Vec<f64>,
    pub svann_wins: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub generate_ms: f64,
    pub train_ms: f64,
    pub predict_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub threads: usize,
    pub toolkit_version: String,
}

impl Environment {
    pub fn current() -> Self {
        Environment {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads: rayon::current_num_threads(),
            toolkit_version: crate::artifact::TOOLKIT_VERSION.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub scenario: String,
    pub options: SuiteOptions,
    pub per_seed: Vec<SeedResult>,
    pub svann_mean: ArmScores,
    pub osfa_mean: ArmScores,
    /// Seeds on which SVANN did not beat OSFA in macro-F1.
    pub failing_seeds: Vec<u64>,
    pub times: PhaseTimes,
    pub environment: Environment,
}

impl SuiteResult {
    pub fn meets_thresholds(&self) -> bool {
        self.failing_seeds.is_empty()
            && self.svann_mean.macro_f1 >= SVANN_MIN_MEAN_MACRO_F1
            && self.osfa_mean.macro_f1 <= OSFA_MAX_MEAN_MACRO_F1
    }

    /// `seed,arm,precision,recall,f1,macro_f1` rows, then the two means with seed `mean`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,arm,precision,recall,f1,macro_f1\n");
        let row = |seed: &str, arm: &str, s: &ArmScores| format!("{seed},{arm},{},{},{},{}\n", s.precision, s.recall, s.f1, s.macro_f1);
        for r in &self.per_seed {
            out.push_str(&row(&r.seed.to_string(), "svann", &r.svann));
            out.push_str(&row(&r.seed.to_string(), "osfa", &r.osfa));
        }
        out.push_str(&row("mean", "svann", &self.svann_mean));
        out.push_str(&row("mean", "osfa", &self.osfa_mean));
        out
    }
}

fn scores(pred: &[usize], truth: &[usize]) -> Result<ArmScores> {
    let r = eval::prf1(eval::classify_counts(pred, truth, 1)?);
    Ok(ArmScores {
        precision: r.precision.value,
        recall: r.recall.value,
        f1: r.f1.value,
        macro_f1: eval::classification_report(pred, truth, 2)?.macro_f1,
    })
}

fn mean_scores(all: impl Iterator<Item = ArmScores> + Clone) -> ArmScores {
    let n = all.clone().count().max(1) as f64;
    let sum = all.fold(ArmScores { precision: 0.0, recall: 0.0, f1: 0.0, macro_f1: 0.0 }, |a, s| ArmScores {
        precision: a.precision + s.precision,
        recall: a.recall + s.recall,
        f1: a.f1 + s.f1,
        macro_f1: a.macro_f1 + s.macro_f1,
    });
    ArmScores { precision: sum.precision / n, recall: sum.recall / n, f1: sum.f1 / n, macro_f1: sum.macro_f1 / n }
}

fn predict_all(sites: &[ModelSite], zones: &ZoneMap, strategy: &PredictionStrategy, b: &Benchmark) -> Result<Vec<usize>> {
    b.test
        .samples()
        .iter()
        .map(|s| predict::predict(sites, Some(zones), DistanceMetric::PlanarEuclidean, strategy, &s.features, &s.loc).map(|p| p.class))
        .collect()
}

/// Runs SVANN (fixed partition, zonal majority vote) against OSFA on the Simpson preset for every seed.
pub fn run_simpson_suite(seeds: &[u64], options: &SuiteOptions) -> Result<SuiteResult> {
    if seeds.len() < MIN_SUITE_SEEDS {
        return Err(SvannError::InvalidArgument(format!("the suite needs at least {MIN_SUITE_SEEDS} seeds, got {}", seeds.len())));
    }
    let network = options.network()?;
    let zonal = PredictionStrategy::Zonal { vote: VoteRule::Majority };
    let mut times = PhaseTimes { generate_ms: 0.0, train_ms: 0.0, predict_ms: 0.0 };
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let t = Instant::now();
        let b = synth::split_benchmark(synth::simpson_scenario(seed, options.noise))?;
        let zones = if options.single_zone { ZoneMap::grid(*b.zones.extent(), 1, 1)? } else { b.zones.clone() };
        times.generate_ms += t.elapsed().as_secs_f64() * 1e3;

        let t = Instant::now();
        let svann = train::train_fixed_partition(&b.train, &network, &zones, &options.regime(RegimeKind::FixedPartition), seed)?;
        let osfa = train::train_osfa(&b.train, &network, &options.regime(RegimeKind::Osfa), seed)?;
        times.train_ms += t.elapsed().as_secs_f64() * 1e3;

        let t = Instant::now();
        let whole = ZoneMap::grid(*zones.extent(), 1, 1)?;
        let mut osfa_sites = osfa.sites.clone();
        osfa_sites[0].anchor = train::Anchor::Zone { zone: whole.zones()[0].id };
        let truth: Vec<usize> = b.test.samples().iter().map(|s| s.label).collect();
        let svann_scores = scores(&predict_all(&svann.sites, &zones, &zonal, &b)?, &truth)?;
        let osfa_scores = scores(&predict_all(&osfa_sites, &whole, &zonal, &b)?, &truth)?;
        let svann_train_accuracy = svann
            .sites
            .iter()
            .zip(&svann.audits)
            .map(|(site, audit)| {
                let own: Vec<_> = b.train.samples().iter().filter(|s| audit.sample_ids.contains(&s.id)).cloned().collect();
                accuracy(&site.params, &own)
            })
            .collect::<Result<Vec<f64>>>()?;
        times.predict_ms += t.elapsed().as_secs_f64() * 1e3;

        per_seed.push(SeedResult {
            seed,
            svann_wins: svann_scores.macro_f1 > osfa_scores.macro_f1,
            svann: svann_scores,
            osfa: osfa_scores,
            svann_train_accuracy,
        });
    }
    Ok(SuiteResult {
        scenario: "simpson".into(),
        options: options.clone(),
        svann_mean: mean_scores(per_seed.iter().map(|r| r.svann.clone())),
        osfa_mean: mean_scores(per_seed.iter().map(|r| r.osfa.clone())),
        failing_seeds: per_seed.iter().filter(|r| !r.svann_wins).map(|r| r.seed).collect(),
        per_seed,
        times,
        environment: Environment::current(),
    })
}

/// Parameter grid for [`run_regime_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub seed: u64,
    pub options: SuiteOptions,
    /// k values for the k-nearest regime; the dataset size is always appended.
    pub k_values: Vec<usize>,
    /// Radii for the distance-bound regime; a radius covering the extent (one anchor) is always appended.
    pub radii: Vec<f64>,
    pub d_min_values: Vec<f64>,
    /// Base rate for distance-weighted training, which multiplies it by up to `1 / d_min²`.
    pub distance_weighted_learning_rate: f64,
    /// Vote exponents for distance-weighted prediction over the zone sites.
    pub exponents: Vec<f64>,
}

impl SweepGrid {
    pub fn simpson_default(seed: u64) -> Self {
        SweepGrid {
            seed,
            options: SuiteOptions::default(),
            k_values: vec![50, 200, 400],
            radii: vec![0.5, 0.8],
            d_min_values: vec![0.1, 0.3],
            distance_weighted_learning_rate: 0.002,
            exponents: vec![1.0, 2.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub regime: String,
    pub param: String,
    pub macro_f1: f64,
    /// For collapse endpoints: whether every site's parameters equal the OSFA parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equals_osfa: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub seed: u64,
    pub rows: Vec<SweepRow>,
    pub train_ms: f64,
    pub environment: Environment,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("regime,param,macro_f1\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.regime, r.param, r.macro_f1));
        }
        out
    }

    pub fn osfa_row(&self) -> &SweepRow {
        &self.rows[0]
    }

    /// The collapse endpoints, which must reproduce the OSFA row.
    pub fn endpoints(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.equals_osfa.is_some())
    }
}

/// Sweeps k, radius, d_min and the vote exponent on one Simpson instance.
///
/// The first row is OSFA. Point-anchored regimes use the zone centroids as
/// anchors and are scored with inverse-square distance-weighted voting.
pub fn run_regime_sweep(grid: &SweepGrid) -> Result<SweepResult> {
    let opts = &grid.options;
    let network = opts.network()?;
    let b = synth::split_benchmark(synth::simpson_scenario(grid.seed, opts.noise))?;
    let zones = b.zones.clone();
    let truth: Vec<usize> = b.test.samples().iter().map(|s| s.label).collect();
    let d_min_vote = 1e-3 * zones.extent().diagonal();
    let idw = PredictionStrategy::DistanceWeighted { exponent: DEFAULT_VOTE_EXPONENT, d_min: d_min_vote };
    let macro_f1 = |sites: &[ModelSite], strategy: &PredictionStrategy| -> Result<f64> {
        let pred = predict_all(sites, &zones, strategy, &b)?;
        Ok(eval::classification_report(&pred, &truth, 2)?.macro_f1)
    };
    let start = Instant::now();

    let osfa = train::train_osfa(&b.train, &network, &opts.regime(RegimeKind::Osfa), grid.seed)?;
    let osfa_params = &osfa.sites[0].params;
    let collapses = |sites: &[ModelSite]| sites.iter().all(|s| s.params == *osfa_params);
    let mut rows = vec![SweepRow { regime: "osfa".into(), param: "-".into(), macro_f1: macro_f1(&osfa.sites, &idw)?, equals_osfa: None }];

    let layout = SpatialLayout { zones: Some(zones.clone()), anchors: None, metric: DistanceMetric::PlanarEuclidean };
    let n = b.train.len();
    let mut ks: Vec<usize> = grid.k_values.iter().copied().filter(|&k| k >= 1 && k < n).collect();
    ks.push(n);
    for k in ks {
        let out = train::train(&b.train, &network, &opts.regime(RegimeKind::Knn { k }), &layout, grid.seed)?;
        rows.push(SweepRow {
            regime: "knn".into(),
            param: format!("k={k}"),
            macro_f1: macro_f1(&out.sites, &idw)?,
            equals_osfa: (k == n).then(|| collapses(&out.sites)),
        });
    }

    for &radius in &grid.radii {
        let out = train::train(&b.train, &network, &opts.regime(RegimeKind::DistanceBound { radius }), &layout, grid.seed)?;
        rows.push(SweepRow {
            regime: "distance_bound".into(),
            param: format!("d={radius}"),
            macro_f1: macro_f1(&out.sites, &idw)?,
            equals_osfa: None,
        });
    }
    let covering = zones.extent().diagonal() * 1.01;
    let single = SpatialLayout { anchors: Some(vec![zones.extent().centroid()]), ..layout.clone() };
    let out = train::train(&b.train, &network, &opts.regime(RegimeKind::DistanceBound { radius: covering }), &single, grid.seed)?;
    rows.push(SweepRow {
        regime: "distance_bound".into(),
        param: format!("d={covering};anchors=1"),
        macro_f1: macro_f1(&out.sites, &idw)?,
        equals_osfa: Some(collapses(&out.sites)),
    });

    for &d_min in &grid.d_min_values {
        let regime = opts.regime(RegimeKind::DistanceWeighted { d_min }).with_learning_rate(grid.distance_weighted_learning_rate);
        let out = train::train(&b.train, &network, &regime, &layout, grid.seed)?;
        rows.push(SweepRow {
            regime: "distance_weighted".into(),
            param: format!("d_min={d_min}"),
            macro_f1: macro_f1(&out.sites, &idw)?,
            equals_osfa: None,
        });
    }

    let zonal_sites = train::train_fixed_partition(&b.train, &network, &zones, &opts.regime(RegimeKind::FixedPartition), grid.seed)?.sites;
    rows.push(SweepRow {
        regime: "fixed_partition".into(),
        param: "vote=zonal".into(),
        macro_f1: macro_f1(&zonal_sites, &PredictionStrategy::Zonal { vote: VoteRule::Majority })?,
        equals_osfa: None,
    });
    for &exponent in &grid.exponents {
        let strategy = PredictionStrategy::DistanceWeighted { exponent, d_min: d_min_vote };
        rows.push(SweepRow {
            regime: "fixed_partition".into(),
            param: format!("vote=idw;p={exponent}"),
            macro_f1: macro_f1(&zonal_sites, &strategy)?,
            equals_osfa: None,
        });
    }

    Ok(SweepResult { seed: grid.seed, rows, train_ms: start.elapsed().as_secs_f64() * 1e3, environment: Environment::current() })
}
