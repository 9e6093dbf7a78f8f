//! Experiment configuration and the operations behind the command-line
//! subcommands: generate, train, predict, evaluate and compare.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifact::{read_text, write_text, ModelArtifact, Provenance, TrainingAudit, FORMAT_VERSION, TOOLKIT_VERSION};
use crate::dataset::Dataset;
use crate::error::{Result, SvannError};
use crate::eval::{self, BoundingBox, ClassificationReport, Counts, Detection, EvalReport, DEFAULT_IOU_THRESHOLD};
use crate::nn::{Activation, NetworkSpec};
use crate::partition::{Rect, ZoneMap};
use crate::predict::{self, PredictionStrategy, Vote, VoteRule};
use crate::synth::{self, SpatialScenario};
use crate::train::{self, ModelSite, RegimeKind, SpatialLayout, TrainingRegime};

/// Where the train/test data come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// A built-in scenario; the experiment seed drives generation.
    Preset {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        noise: Option<f64>,
    },
    /// A user scenario split 80/20; its own `seed` field is overridden by the experiment seed.
    Scenario {
        scenario: SpatialScenario,
    },
    Files {
        train: PathBuf,
        test: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    #[serde(default = "default_iou")]
    pub iou_threshold: f64,
    #[serde(default = "default_positive")]
    pub positive_class: usize,
}

fn default_iou() -> f64 {
    DEFAULT_IOU_THRESHOLD
}

fn default_positive() -> usize {
    1
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { iou_threshold: DEFAULT_IOU_THRESHOLD, positive_class: 1 }
    }
}

fn default_osfa() -> TrainingRegime {
    TrainingRegime::new(RegimeKind::Osfa)
}

fn default_svann() -> TrainingRegime {
    TrainingRegime::new(RegimeKind::FixedPartition)
}

fn default_prediction() -> PredictionStrategy {
    PredictionStrategy::Zonal { vote: VoteRule::Majority }
}

pub const DEFAULT_HIDDEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Defaults to one hidden ReLU layer of [`DEFAULT_HIDDEN`] units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkSpec>,
    #[serde(default = "default_osfa")]
    pub osfa: TrainingRegime,
    #[serde(default = "default_svann")]
    pub svann: TrainingRegime,
    /// Zones and anchors; preset and scenario sources fill in their own zones when absent.
    #[serde(default)]
    pub layout: SpatialLayout,
    #[serde(default = "default_prediction")]
    pub prediction: PredictionStrategy,
    #[serde(default)]
    pub eval: EvalOptions,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// The canonical two-zone comparison on the Simpson preset.
    pub fn simpson(seed: u64) -> Self {
        ExperimentConfig {
            data: DataSource::Preset { name: "simpson".into(), noise: None },
            network: None,
            osfa: default_osfa(),
            svann: default_svann(),
            layout: SpatialLayout::default(),
            prediction: default_prediction(),
            eval: EvalOptions::default(),
            seed,
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SvannError::Config(format!("invalid experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.osfa.validate()?;
        self.svann.validate()?;
        self.prediction.validate()?;
        if self.osfa.kind != RegimeKind::Osfa {
            return Err(SvannError::Config("the osfa arm must use the osfa regime".into()));
        }
        if !(self.eval.iou_threshold > 0.0 && self.eval.iou_threshold <= 1.0) {
            return Err(SvannError::Config("iou_threshold must lie in (0, 1]".into()));
        }
        if let DataSource::Files { train, test } = &self.data {
            for p in [train, test] {
                if !p.exists() {
                    return Err(SvannError::Config(format!("data file {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn provenance(&self) -> Result<Provenance> {
        Provenance::for_config(self)
    }
}

/// Train/test data plus the resolved spatial layout and network.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
    pub layout: SpatialLayout,
    pub network: NetworkSpec,
    pub scenario: Option<SpatialScenario>,
}

/// Scenario for a named preset.
pub fn preset_scenario(name: &str, seed: u64, noise: Option<f64>) -> Result<SpatialScenario> {
    match name {
        "simpson" => Ok(synth::simpson_scenario(seed, noise.unwrap_or(synth::SIMPSON_NOISE))),
        other => Err(SvannError::Config(format!("unknown preset {other:?} (available: simpson)"))),
    }
}

fn default_network(train: &Dataset, test: &Dataset) -> Result<NetworkSpec> {
    let classes = train.class_count().max(test.class_count()).max(2);
    NetworkSpec::new(vec![train.feature_dim(), DEFAULT_HIDDEN, classes], Activation::Relu)
}

fn bounding_extent(data: &[&Dataset]) -> Option<Rect> {
    let pts = data.iter().flat_map(|d| d.samples().iter().map(|s| s.loc));
    let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        lo_x = lo_x.min(p.x);
        lo_y = lo_y.min(p.y);
        hi_x = hi_x.max(p.x);
        hi_y = hi_y.max(p.y);
    }
    Rect::new(lo_x, lo_y, hi_x, hi_y).ok()
}

/// Loads or generates the experiment's data.
pub fn prepare(config: &ExperimentConfig) -> Result<PreparedData> {
    config.validate()?;
    let (train, test, zones, scenario) = match &config.data {
        DataSource::Preset { name, noise } => {
            let b = synth::split_benchmark(preset_scenario(name, config.seed, *noise)?)?;
            (b.train, b.test, Some(b.zones), Some(b.scenario))
        }
        DataSource::Scenario { scenario } => {
            let b = synth::split_benchmark(SpatialScenario { seed: config.seed, ..scenario.clone() })?;
            (b.train, b.test, Some(b.zones), Some(b.scenario))
        }
        DataSource::Files { train, test } => (Dataset::load(train)?, Dataset::load(test)?, None, None),
    };
    let mut layout = config.layout.clone();
    if layout.zones.is_none() {
        layout.zones = zones;
    }
    let network = match &config.network {
        Some(n) => n.clone(),
        None => default_network(&train, &test)?,
    };
    Ok(PreparedData { train, test, layout, network, scenario })
}

/// Default voting clamp: 1e-3 of the study-area diagonal.
pub fn default_d_min(layout: &SpatialLayout, data: &[&Dataset]) -> f64 {
    let diag = layout.zones.as_ref().map(|z| z.extent().diagonal()).or_else(|| bounding_extent(data).map(|r| r.diagonal())).unwrap_or(1.0);
    1e-3 * diag
}

/// Output of the `generate` subcommand.
pub struct GeneratedFiles {
    pub train_csv: String,
    pub test_csv: String,
    pub scenario_json: String,
}

pub fn generate_files(scenario: &SpatialScenario) -> Result<GeneratedFiles> {
    let b = synth::split_benchmark(scenario.clone())?;
    let mut scenario_json = serde_json::to_string_pretty(&b.scenario)?;
    scenario_json.push('\n');
    Ok(GeneratedFiles { train_csv: b.train.to_csv_string()?, test_csv: b.test.to_csv_string()?, scenario_json })
}

/// Writes `train.csv`, `test.csv` and `scenario.json` into an existing directory.
pub fn cmd_generate(scenario: &SpatialScenario, out_dir: &Path) -> Result<()> {
    require_dir(out_dir)?;
    let files = generate_files(scenario)?;
    write_text(&out_dir.join("train.csv"), &files.train_csv)?;
    write_text(&out_dir.join("test.csv"), &files.test_csv)?;
    write_text(&out_dir.join("scenario.json"), &files.scenario_json)
}

/// Fails with a filesystem error unless `dir` is an existing directory.
pub fn require_dir(dir: &Path) -> Result<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(SvannError::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist")))
    }
}

/// Which arm of the experiment to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Osfa,
    Svann,
}

impl std::str::FromStr for Arm {
    type Err = SvannError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "osfa" => Ok(Arm::Osfa),
            "svann" => Ok(Arm::Svann),
            other => Err(SvannError::Config(format!("unknown arm {other:?} (expected osfa or svann)"))),
        }
    }
}

pub struct TrainedArm {
    pub artifact: ModelArtifact,
    pub audit: TrainingAudit,
}

pub fn train_arm(config: &ExperimentConfig, data: &PreparedData, arm: Arm) -> Result<TrainedArm> {
    let regime = match arm {
        Arm::Osfa => config.osfa,
        Arm::Svann => config.svann,
    };
    let outcome = train::train(&data.train, &data.network, &regime, &data.layout, config.seed)?;
    let provenance = config.provenance()?;
    let audit = TrainingAudit::from_outcome(&outcome, regime, provenance.config_hash.clone());
    let artifact = ModelArtifact {
        format_version: FORMAT_VERSION,
        network: data.network.clone(),
        metric: data.layout.metric,
        zones: data.layout.zones.clone(),
        default_d_min: default_d_min(&data.layout, &[&data.train, &data.test]),
        sites: outcome.sites,
        provenance,
    };
    Ok(TrainedArm { artifact, audit })
}

/// Writes `model.json` and `audit.json` into `out_dir`.
pub fn cmd_train(config: &ExperimentConfig, arm: Arm, out_dir: &Path) -> Result<TrainedArm> {
    require_dir(out_dir)?;
    let data = prepare(config)?;
    let trained = train_arm(config, &data, arm)?;
    trained.artifact.save(&out_dir.join("model.json"))?;
    write_text(&out_dir.join("audit.json"), &trained.audit.to_json()?)?;
    Ok(trained)
}

/// One line of `predict` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: u64,
    pub class: usize,
    pub strategy: String,
    /// Sites whose votes entered the decision.
    pub routed_sites: Vec<usize>,
    pub votes: Vec<Vote>,
    pub class_weights: Vec<f64>,
}

/// Parses a strategy name with its parameters.
pub fn parse_strategy(name: &str, vote: VoteRule, exponent: f64, d_min: f64) -> Result<PredictionStrategy> {
    let s = match name {
        "zonal" => PredictionStrategy::Zonal { vote },
        "distance_weighted" | "distance-weighted" => PredictionStrategy::DistanceWeighted { exponent, d_min },
        other => return Err(SvannError::Config(format!("unknown prediction strategy {other:?} (expected zonal or distance_weighted)"))),
    };
    s.validate().map_err(|e| SvannError::Config(e.to_string()))?;
    Ok(s)
}

pub fn predict_dataset(artifact: &ModelArtifact, test: &Dataset, strategy: &PredictionStrategy) -> Result<Vec<PredictionRecord>> {
    strategy.validate()?;
    test.samples()
        .iter()
        .map(|s| {
            let p = predict::predict(&artifact.sites, artifact.zones.as_ref(), artifact.metric, strategy, &s.features, &s.loc)?;
            Ok(PredictionRecord {
                id: s.id,
                class: p.class,
                strategy: strategy.name().to_string(),
                routed_sites: p.votes.iter().map(|v| v.site_id).collect(),
                votes: p.votes,
                class_weights: p.class_weights,
            })
        })
        .collect()
}

/// Pretty JSON with a trailing newline, the layout of every JSON file the toolkit writes.
pub fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn to_json_lines<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_json_lines<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| SvannError::Data(format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn cmd_predict(artifact_path: &Path, test_csv: &Path, strategy: &PredictionStrategy) -> Result<String> {
    let artifact = ModelArtifact::load(artifact_path)?;
    let test = Dataset::load(test_csv)?;
    to_json_lines(&predict_dataset(&artifact, &test, strategy)?)
}

/// Minimal view of a prediction line used by `evaluate`.
#[derive(Debug, Clone, Deserialize)]
struct ClassPrediction {
    id: u64,
    class: usize,
}

/// Output of `evaluate` for classification predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationEvaluation {
    pub positive_class: usize,
    /// Positive-class counts, stratified by zone when a zone map is given.
    pub report: EvalReport,
    pub pooled: ClassificationReport,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub strata: BTreeMap<String, ClassificationReport>,
}

impl ClassificationEvaluation {
    /// `stratum,precision,recall,f1,macro_f1` rows, pooled first.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stratum,precision,recall,f1,macro_f1\n");
        let row = |name: &str, r: &EvalReport, m: &ClassificationReport| {
            format!("{name},{},{},{},{}\n", r.precision.value, r.recall.value, r.f1.value, m.macro_f1)
        };
        out.push_str(&row("all", &self.report, &self.pooled));
        for (name, m) in &self.strata {
            out.push_str(&row(name, &self.report.strata[name], m));
        }
        out
    }
}

pub fn evaluate_classification(
    predictions_jsonl: &str,
    truth: &Dataset,
    zones: Option<&ZoneMap>,
    positive_class: usize,
) -> Result<ClassificationEvaluation> {
    let preds: Vec<ClassPrediction> = read_json_lines(predictions_jsonl)?;
    let by_id: BTreeMap<u64, usize> = preds.iter().map(|p| (p.id, p.class)).collect();
    if by_id.len() != preds.len() {
        return Err(SvannError::Data("duplicate sample id in predictions".into()));
    }
    let mut pred = Vec::with_capacity(truth.len());
    let mut labels = Vec::with_capacity(truth.len());
    let mut stratum_of = Vec::with_capacity(truth.len());
    for s in truth.samples() {
        let class = *by_id.get(&s.id).ok_or_else(|| SvannError::Data(format!("no prediction for sample {}", s.id)))?;
        pred.push(class);
        labels.push(s.label);
        stratum_of.push(match zones {
            Some(z) => Some(format!("zone-{}", z.assign(&s.loc)?)),
            None => None,
        });
    }
    let classes = truth.class_count().max(pred.iter().max().map_or(0, |m| m + 1)).max(positive_class + 1);
    let pooled = eval::classification_report(&pred, &labels, classes)?;
    let mut strata_counts: BTreeMap<String, Counts> = BTreeMap::new();
    let mut strata = BTreeMap::new();
    let names: std::collections::BTreeSet<&String> = stratum_of.iter().flatten().collect();
    for name in names {
        let idx: Vec<usize> = (0..pred.len()).filter(|&i| stratum_of[i].as_ref() == Some(name)).collect();
        let p: Vec<usize> = idx.iter().map(|&i| pred[i]).collect();
        let t: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        strata_counts.insert(name.clone(), eval::classify_counts(&p, &t, positive_class)?);
        strata.insert(name.clone(), eval::classification_report(&p, &t, classes)?);
    }
    let report = if strata_counts.is_empty() {
        EvalReport::from_counts(eval::classify_counts(&pred, &labels, positive_class)?)
    } else {
        EvalReport::stratified(strata_counts)
    };
    Ok(ClassificationEvaluation { positive_class, report, pooled, strata })
}

/// One predicted box in detection-mode `evaluate` input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: f64,
}

/// Per-image greedy matching, with counts pooled per stratum.
///
/// `truth_csv` has header `image,x,y,w,h` plus an optional `stratum` column;
/// an image's stratum is taken from its truth rows (images without truth rows
/// fall into `"unlabeled"`).
pub fn evaluate_detections<R: Read>(predictions_jsonl: &str, truth_csv: R, iou_threshold: f64) -> Result<EvalReport> {
    let preds: Vec<DetectionRecord> = read_json_lines(predictions_jsonl)?;
    let mut reader = csv::Reader::from_reader(truth_csv);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (ci, cx, cy, cw, ch) = match (col("image"), col("x"), col("y"), col("w"), col("h")) {
        (Some(a), Some(b), Some(c), Some(d), Some(e)) => (a, b, c, d, e),
        _ => return Err(SvannError::Data("truth header must contain image,x,y,w,h".into())),
    };
    let cs = col("stratum");
    let mut truth: BTreeMap<String, Vec<BoundingBox>> = BTreeMap::new();
    let mut stratum: BTreeMap<String, String> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> { rec[i].trim().parse().map_err(|_| SvannError::Data(format!("bad number {:?}", &rec[i]))) };
        let image = rec[ci].to_string();
        let b = BoundingBox::new(num(cx)?, num(cy)?, num(cw)?, num(ch)?)?;
        truth.entry(image.clone()).or_default().push(b);
        let s = cs.map_or("all".to_string(), |i| rec[i].to_string());
        match stratum.get(&image) {
            Some(prev) if *prev != s => return Err(SvannError::Data(format!("image {image} has inconsistent strata {prev} and {s}"))),
            _ => {
                stratum.insert(image, s);
            }
        }
    }
    let mut detections: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    for p in preds {
        let bbox = BoundingBox::new(p.x, p.y, p.w, p.h)?;
        detections.entry(p.image).or_default().push(Detection { bbox, confidence: p.confidence });
    }
    let images: std::collections::BTreeSet<&String> = truth.keys().chain(detections.keys()).collect();
    let mut counts: BTreeMap<String, Counts> = BTreeMap::new();
    for image in images {
        let c =
            eval::match_detections(detections.get(image).map_or(&[][..], |v| v), truth.get(image).map_or(&[][..], |v| v), iou_threshold)?;
        let s = stratum.get(image).cloned().unwrap_or_else(|| "unlabeled".into());
        let entry = counts.entry(s).or_default();
        *entry = *entry + c;
    }
    Ok(EvalReport::stratified(counts))
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub approach: String,
    pub model: String,
    pub test_data: String,
    pub n_test: usize,
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config_hash: String,
    pub toolkit_version: String,
    pub seed: u64,
    pub svann_regime: String,
    pub prediction: String,
    pub positive_class: usize,
    pub rows: Vec<ComparisonRow>,
    /// Whether every SVANN row has a higher F1 than the OSFA row that follows it.
    pub svann_beats_osfa: bool,
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn to_text_table(&self) -> String {
        let mut out = format!(
            "{:<8} {:<22} {:<12} {:>9} {:>7} {:>8} {:>9}\n",
            "Approach", "Model", "Test data", "Precision", "Recall", "F1", "Macro-F1"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<8} {:<22} {:<12} {:>9.3} {:>7.3} {:>8.3} {:>9.3}\n",
                r.approach, r.model, r.test_data, r.precision, r.recall, r.f1, r.macro_f1
            ));
        }
        out
    }

    /// The SVANN/OSFA pair of rows for each test subset.
    pub fn pairs(&self) -> impl Iterator<Item = (&ComparisonRow, &ComparisonRow)> {
        self.rows.chunks_exact(2).map(|c| (&c[0], &c[1]))
    }
}

fn score_rows(
    approach: &str,
    model: String,
    test_data: String,
    pred: &[usize],
    truth: &[usize],
    classes: usize,
    positive: usize,
) -> Result<ComparisonRow> {
    let counts = eval::classify_counts(pred, truth, positive)?;
    let r = eval::prf1(counts);
    let macro_f1 = eval::classification_report(pred, truth, classes)?.macro_f1;
    Ok(ComparisonRow {
        approach: approach.into(),
        model,
        test_data,
        n_test: pred.len(),
        counts,
        precision: r.precision.value,
        recall: r.recall.value,
        f1: r.f1.value,
        macro_f1,
    })
}

fn site_labels(sites: &[ModelSite]) -> String {
    let ids: Vec<String> = sites.iter().map(|s| s.site_id.to_string()).collect();
    format!("sites {}", ids.join(","))
}

/// Trains both arms and scores them per zone and on the pooled test set:
/// for each zone an SVANN row then an OSFA row, and finally the pooled pair.
pub fn compare(config: &ExperimentConfig) -> Result<ComparisonReport> {
    let data = prepare(config)?;
    let zones =
        data.layout.zones.clone().ok_or_else(|| SvannError::Config("compare needs a zone map to define the test subsets".into()))?;
    let svann = train_arm(config, &data, Arm::Svann)?.artifact;
    let osfa = train_arm(config, &data, Arm::Osfa)?.artifact;
    let osfa_strategy = PredictionStrategy::Zonal { vote: VoteRule::Majority };
    let osfa_sites: Vec<ModelSite> = osfa
        .sites
        .iter()
        .cloned()
        .map(|mut s| {
            // the global model serves every zone
            s.anchor = crate::train::Anchor::point(zones.extent().centroid());
            s
        })
        .collect();
    let superzone = ZoneMap::grid(*zones.extent(), 1, 1)?;

    let samples = data.test.samples();
    let truth: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let mut svann_pred = Vec::with_capacity(samples.len());
    let mut svann_used: Vec<Vec<usize>> = Vec::with_capacity(samples.len());
    let mut osfa_pred = Vec::with_capacity(samples.len());
    let mut zone_of = Vec::with_capacity(samples.len());
    for s in samples {
        let p = predict::predict(&svann.sites, Some(&zones), svann.metric, &config.prediction, &s.features, &s.loc)?;
        svann_used.push(p.votes.iter().map(|v| v.site_id).collect());
        svann_pred.push(p.class);
        let o = predict::predict(&osfa_sites, Some(&superzone), osfa.metric, &osfa_strategy, &s.features, &s.loc)?;
        osfa_pred.push(o.class);
        zone_of.push(zones.assign(&s.loc)?);
    }
    let classes = data.network.class_count();
    let positive = config.eval.positive_class;

    let mut rows = Vec::new();
    for zone in zones.zones() {
        let idx: Vec<usize> = (0..samples.len()).filter(|&i| zone_of[i] == zone.id).collect();
        if idx.is_empty() {
            continue;
        }
        let pick = |v: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<usize>>();
        let mut used: Vec<usize> = idx.iter().flat_map(|&i| svann_used[i].iter().copied()).collect();
        used.sort_unstable();
        used.dedup();
        let used_sites: Vec<ModelSite> = svann.sites.iter().filter(|s| used.contains(&s.site_id)).cloned().collect();
        let subset = format!("zone {}", zone.id);
        rows.push(score_rows("SVANN", site_labels(&used_sites), subset.clone(), &pick(&svann_pred), &pick(&truth), classes, positive)?);
        rows.push(score_rows("OSFA", "global".into(), subset, &pick(&osfa_pred), &pick(&truth), classes, positive)?);
    }
    rows.push(score_rows("SVANN", site_labels(&svann.sites), "all zones".into(), &svann_pred, &truth, classes, positive)?);
    rows.push(score_rows("OSFA", "global".into(), "all zones".into(), &osfa_pred, &truth, classes, positive)?);

    let svann_beats_osfa = rows.chunks_exact(2).all(|c| c[0].f1 > c[1].f1);
    let provenance = config.provenance()?;
    Ok(ComparisonReport {
        config_hash: provenance.config_hash,
        toolkit_version: TOOLKIT_VERSION.to_string(),
        seed: config.seed,
        svann_regime: config.svann.kind.name().to_string(),
        prediction: config.prediction.name().to_string(),
        positive_class: positive,
        rows,
        svann_beats_osfa,
    })
}

/// Writes `comparison.json` and `comparison.txt` into `out_dir`.
pub fn cmd_compare(config: &ExperimentConfig, out_dir: &Path) -> Result<ComparisonReport> {
    require_dir(out_dir)?;
    let report = compare(config)?;
    write_text(&out_dir.join("comparison.json"), &report.to_json()?)?;
    write_text(&out_dir.join("comparison.txt"), &report.to_text_table())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(seed: u64) -> ExperimentConfig {
        let mut c = ExperimentConfig::simpson(seed);
        c.osfa = c.osfa.with_epochs(20);
        c.svann = c.svann.with_epochs(20);
        c
    }

    #[test]
    fn config_json_defaults() {
        let c = ExperimentConfig::from_json(r#"{"data":{"source":"preset","name":"simpson"},"seed":3}"#).unwrap();
        assert_eq!(c, ExperimentConfig::simpson(3));
        assert!(ExperimentConfig::from_json(r#"{"data":{"source":"preset","name":"simpson"}}"#).is_err());
        let bad = ExperimentConfig::from_json(r#"{"data":{"source":"preset","name":"nope"},"seed":3}"#).unwrap();
        assert!(matches!(prepare(&bad), Err(SvannError::Config(_))));
    }

    #[test]
    fn compare_has_six_rows_in_pairs() {
        let r = compare(&quick(2)).unwrap();
        assert_eq!(r.rows.len(), 6);
        for (s, o) in r.pairs() {
            assert_eq!((s.approach.as_str(), o.approach.as_str()), ("SVANN", "OSFA"));
            assert_eq!(s.test_data, o.test_data);
        }
        assert_eq!(r.rows[0].model, "sites 0");
        assert_eq!(r.rows[2].model, "sites 1");
        assert_eq!(r.rows.iter().take(4).step_by(2).map(|r| r.n_test).sum::<usize>(), 200);
    }

    #[test]
    fn strategy_names() {
        assert!(matches!(parse_strategy("zonal", VoteRule::Mean, 2.0, 0.1), Ok(PredictionStrategy::Zonal { vote: VoteRule::Mean })));
        assert!(parse_strategy("distance_weighted", VoteRule::Majority, 2.0, 0.1).is_ok());
        assert!(matches!(parse_strategy("nearest", VoteRule::Majority, 2.0, 0.1), Err(SvannError::Config(_))));
        assert!(matches!(parse_strategy("distance_weighted", VoteRule::Majority, -1.0, 0.1), Err(SvannError::Config(_))));
    }

    #[test]
    fn detection_evaluation_strata_partition_totals() {
        let preds = [
            r#"{"image":"a","x":0,"y":0,"w":2,"h":2,"confidence":0.9}"#,
            r#"{"image":"a","x":5,"y":5,"w":1,"h":1,"confidence":0.4}"#,
            r#"{"image":"b","x":0,"y":0,"w":1,"h":1,"confidence":0.7}"#,
            r#"{"image":"c","x":0,"y":0,"w":1,"h":1,"confidence":0.7}"#,
        ]
        .join("\n");
        let truth = "image,x,y,w,h,stratum\na,0,0,2,2,occluded\nb,3,3,1,1,axis_parallel\nb,0,0,1,1,axis_parallel\n";
        let r = evaluate_detections(&preds, truth.as_bytes(), 0.6).unwrap();
        assert_eq!(r.counts, Counts::new(2, 2, 1));
        assert_eq!(r.strata["occluded"].counts, Counts::new(1, 1, 0));
        assert_eq!(r.strata["axis_parallel"].counts, Counts::new(1, 0, 1));
        assert_eq!(r.strata["unlabeled"].counts, Counts::new(0, 1, 0));
        let sum: Counts = r.strata.values().map(|s| s.counts).sum();
        assert_eq!(sum, r.counts);
    }

    #[test]
    fn classification_evaluation_round_trip() {
        let b = synth::simpson_benchmark(5).unwrap();
        let lines: Vec<String> = b.test.samples().iter().map(|s| format!(r#"{{"id":{},"class":{}}}"#, s.id, s.label)).collect();
        let e = evaluate_classification(&lines.join("\n"), &b.test, Some(&b.zones), 1).unwrap();
        assert_eq!(e.pooled.macro_f1, 1.0);
        assert_eq!(e.strata.len(), 2);
        let csv = e.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("stratum,precision,recall,f1,macro_f1\nall,1,1,1,1\n"));
        let missing = lines[1..].join("\n");
        assert!(evaluate_classification(&missing, &b.test, None, 1).is_err());
    }
}
