//! `svann` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration, 3 data, 4 numeric, 5 filesystem.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use svann_core::artifact::{read_text, write_text, ModelArtifact};
use svann_core::experiment::{self, Arm, DataSource, ExperimentConfig};
use svann_core::suite::{self, SuiteOptions, SweepGrid};
use svann_core::{Dataset, ErrorKind, RegimeKind, Result, SvannError, VoteRule, ZoneMap};

#[derive(Parser)]
#[command(name = "svann", version, about = "Spatial-variability-aware neural network ensembles")]
struct Cli {
    /// Random seed (overrides the config's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; must exist.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write train.csv, test.csv and scenario.json for a synthetic scenario.
    Generate {
        #[arg(long)]
        preset: Option<String>,
        /// Label-flip probability.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Train one arm and write model.json and audit.json.
    Train {
        #[arg(long, value_enum, default_value = "svann")]
        arm: ArmArg,
        #[command(flatten)]
        regime: RegimeArgs,
    },
    /// Predict every row of a test CSV into predictions.jsonl.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// zonal or distance_weighted.
        #[arg(long, default_value = "zonal")]
        strategy: String,
        #[arg(long, value_enum, default_value = "majority")]
        vote: VoteArg,
        #[arg(long, default_value_t = svann_core::predict::DEFAULT_VOTE_EXPONENT)]
        exponent: f64,
        /// Clamp distance for the vote weights; defaults to the artifact's value.
        #[arg(long)]
        d_min: Option<f64>,
    },
    /// Score predictions against ground truth into evaluation.json and evaluation.csv.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        /// Labeled CSV (classification) or `image,x,y,w,h[,stratum]` CSV (detection).
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_enum, default_value = "classification")]
        mode: ModeArg,
        /// Artifact whose zone map stratifies classification results.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = svann_core::eval::DEFAULT_IOU_THRESHOLD)]
        iou_threshold: f64,
        #[arg(long, default_value_t = 1)]
        positive_class: usize,
    },
    /// Train both arms and write comparison.json and comparison.txt.
    Compare {
        #[command(flatten)]
        regime: RegimeArgs,
    },
    /// Multi-seed Simpson benchmark, optionally with the regime sweep.
    Bench {
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        noise: Option<f64>,
        /// Give SVANN a single zone covering the extent.
        #[arg(long)]
        single_zone: bool,
        #[arg(long)]
        epochs: Option<usize>,
        /// Also sweep k, radius, d_min and the vote exponent.
        #[arg(long)]
        sweep: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ArmArg {
    Osfa,
    Svann,
}

#[derive(Clone, Copy, ValueEnum)]
enum VoteArg {
    Majority,
    Mean,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Classification,
    Detection,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    FixedPartition,
    DistanceBound,
    Knn,
    DistanceWeighted,
}

/// Overrides for the SVANN arm's regime.
#[derive(Args)]
struct RegimeArgs {
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    /// Training clamp distance for distance_weighted.
    #[arg(long)]
    train_d_min: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

impl RegimeArgs {
    fn apply(&self, config: &mut ExperimentConfig) -> Result<()> {
        let missing = |flag: &str| SvannError::Config(format!("--{flag} is required by this regime"));
        if let Some(r) = self.regime {
            config.svann.kind = match r {
                RegimeArg::FixedPartition => RegimeKind::FixedPartition,
                RegimeArg::DistanceBound => RegimeKind::DistanceBound { radius: self.radius.ok_or_else(|| missing("radius"))? },
                RegimeArg::Knn => RegimeKind::Knn { k: self.k.ok_or_else(|| missing("k"))? },
                RegimeArg::DistanceWeighted => {
                    RegimeKind::DistanceWeighted { d_min: self.train_d_min.ok_or_else(|| missing("train-d-min"))? }
                }
            };
        }
        for regime in [&mut config.svann, &mut config.osfa] {
            if let Some(e) = self.epochs {
                regime.epochs = e;
            }
            if let Some(lr) = self.learning_rate {
                regime.learning_rate = lr;
            }
        }
        config.validate()
    }
}

impl Cli {
    /// The config file with the `--seed` override, or the Simpson preset at `--seed`.
    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::simpson(self.require_seed()?),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }

    fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| SvannError::Config("--seed is required when no --config is given".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("svann: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
        ErrorKind::Filesystem => 5,
    }
}

/// Caps the worker pool at `SVANN_THREADS` when set.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("SVANN_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| SvannError::Config(format!("SVANN_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| SvannError::Config(format!("cannot size the thread pool: {e}")))
}

fn run(cli: &Cli) -> Result<()> {
    let out = cli.out.as_path();
    match &cli.command {
        Command::Generate { preset, noise } => generate(cli, preset.as_deref(), *noise),
        Command::Train { arm, regime } => {
            let mut config = cli.experiment()?;
            regime.apply(&mut config)?;
            let arm = match arm {
                ArmArg::Osfa => Arm::Osfa,
                ArmArg::Svann => Arm::Svann,
            };
            let trained = experiment::cmd_train(&config, arm, out)?;
            for w in &trained.audit.warnings {
                eprintln!("warning: {w}");
            }
            println!("trained {} site(s) into {}", trained.artifact.sites.len(), out.join("model.json").display());
            Ok(())
        }
        Command::Predict { model, test, strategy, vote, exponent, d_min } => {
            experiment::require_dir(out)?;
            let artifact = ModelArtifact::load(model)?;
            let vote = match vote {
                VoteArg::Majority => VoteRule::Majority,
                VoteArg::Mean => VoteRule::Mean,
            };
            let strategy = experiment::parse_strategy(strategy, vote, *exponent, d_min.unwrap_or(artifact.default_d_min))?;
            let records = experiment::predict_dataset(&artifact, &Dataset::load(test)?, &strategy)?;
            write_text(&out.join("predictions.jsonl"), &experiment::to_json_lines(&records)?)?;
            println!("wrote {} predictions", records.len());
            Ok(())
        }
        Command::Evaluate { predictions, truth, mode, model, iou_threshold, positive_class } => {
            experiment::require_dir(out)?;
            let preds = read_text(predictions)?;
            let (json, csv) = match mode {
                ModeArg::Classification => {
                    let zones: Option<ZoneMap> = match model {
                        Some(m) => ModelArtifact::load(m)?.zones,
                        None => None,
                    };
                    let e = experiment::evaluate_classification(&preds, &Dataset::load(truth)?, zones.as_ref(), *positive_class)?;
                    println!(
                        "precision {:.4} recall {:.4} f1 {:.4} macro-f1 {:.4}",
                        e.report.precision.value, e.report.recall.value, e.report.f1.value, e.pooled.macro_f1
                    );
                    (experiment::to_pretty_json(&e)?, e.to_csv())
                }
                ModeArg::Detection => {
                    let file = std::fs::File::open(truth).map_err(|e| SvannError::io(truth, e))?;
                    let r = experiment::evaluate_detections(&preds, file, *iou_threshold)?;
                    println!("precision {:.4} recall {:.4} f1 {:.4}", r.precision.value, r.recall.value, r.f1.value);
                    (experiment::to_pretty_json(&r)?, r.to_csv())
                }
            };
            write_text(&out.join("evaluation.json"), &json)?;
            write_text(&out.join("evaluation.csv"), &csv)
        }
        Command::Compare { regime } => {
            let mut config = cli.experiment()?;
            regime.apply(&mut config)?;
            let report = experiment::cmd_compare(&config, out)?;
            print!("{}", report.to_text_table());
            Ok(())
        }
        Command::Bench { seeds, noise, single_zone, epochs, sweep } => {
            bench(out, cli.seed, seeds.as_deref(), *noise, *single_zone, *epochs, *sweep)
        }
    }
}

fn generate(cli: &Cli, preset: Option<&str>, noise: Option<f64>) -> Result<()> {
    let scenario = match (&cli.config, preset) {
        (Some(_), Some(_)) => return Err(SvannError::Config("give either --config or --preset, not both".into())),
        (Some(_), None) => {
            let config = cli.experiment()?;
            match config.data {
                DataSource::Preset { name, noise: n } => experiment::preset_scenario(&name, config.seed, noise.or(n))?,
                DataSource::Scenario { scenario } => {
                    svann_core::SpatialScenario { seed: config.seed, noise: noise.unwrap_or(scenario.noise), ..scenario }
                }
                DataSource::Files { .. } => return Err(SvannError::Config("a file data source has nothing to generate".into())),
            }
        }
        (None, p) => experiment::preset_scenario(p.unwrap_or("simpson"), cli.require_seed()?, noise)?,
    };
    experiment::cmd_generate(&scenario, &cli.out)?;
    println!("wrote train.csv, test.csv and scenario.json to {}", cli.out.display());
    Ok(())
}

fn bench(
    out: &Path,
    seed: Option<u64>,
    seeds: Option<&[u64]>,
    noise: Option<f64>,
    single_zone: bool,
    epochs: Option<usize>,
    sweep: bool,
) -> Result<()> {
    experiment::require_dir(out)?;
    let seeds = seeds.map_or_else(|| suite::DEFAULT_SUITE_SEEDS.to_vec(), <[u64]>::to_vec);
    let mut options = SuiteOptions { single_zone, ..SuiteOptions::default() };
    if let Some(n) = noise {
        options.noise = n;
    }
    if let Some(e) = epochs {
        options.epochs = e;
    }
    let result = suite::run_simpson_suite(&seeds, &options)?;
    write_text(&out.join("bench.json"), &experiment::to_pretty_json(&result)?)?;
    write_text(&out.join("bench.csv"), &result.to_csv())?;
    println!(
        "svann mean macro-f1 {:.4}, osfa {:.4}, svann ahead on {}/{} seeds, thresholds {}",
        result.svann_mean.macro_f1,
        result.osfa_mean.macro_f1,
        seeds.len() - result.failing_seeds.len(),
        seeds.len(),
        if result.meets_thresholds() { "met" } else { "NOT met" }
    );
    if sweep {
        let grid = SweepGrid { options, ..SweepGrid::simpson_default(seed.unwrap_or(seeds[0])) };
        let s = suite::run_regime_sweep(&grid)?;
        write_text(&out.join("sweep.json"), &experiment::to_pretty_json(&s)?)?;
        write_text(&out.join("sweep.csv"), &s.to_csv())?;
        for r in s.endpoints() {
            println!("{} {}: equals osfa = {}", r.regime, r.param, r.equals_osfa == Some(true));
        }
    }
    Ok(())
}
