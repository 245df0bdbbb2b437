//! Command-line front end.
//!
//! Five subcommands cover the batch pipeline: `ingest` sensor CSV into a
//! sensor-level XES log, `generate` synthetic annotated logs from the
//! built-in model, `train` an abstractor, `abstract` a log into
//! human-activity events, and `evaluate` with leave-one-trace-out
//! cross-validation. Every flag can also be supplied from a TOML config
//! file; explicit flags win. Exit codes: 0 success, 2 input error,
//! 1 internal error. Diagnostics go to stderr, data to files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use chrono::{FixedOffset, NaiveTime};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::abstraction::{
    annotate, collapse_log, train_abstractor, AbstractionError, AbstractorModel, FeatureConfig,
};
use crate::crf::{CrfError, TrainConfig};
use crate::evaluation::{loto_cv, EvaluationError};
use crate::features::{FeatureError, Period};
use crate::ingest::{read_sensor_csv, readings_to_events, segment_cases, SegmentationPolicy};
use crate::petri::{motivating_example, simulate, SimError, StopPolicy};
use crate::xes::{parse_xes, write_xes, ExtensionDecl, XesError};

#[derive(Debug)]
enum CliError {
    /// Problems in user-supplied inputs or flags — exit code 2.
    Input(String),
    /// Everything else — exit code 1.
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Input(_) => ExitCode::from(2),
            CliError::Internal(_) => ExitCode::from(1),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<XesError> for CliError {
    fn from(e: XesError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<crate::ingest::IngestError> for CliError {
    fn from(e: crate::ingest::IngestError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<AbstractionError> for CliError {
    fn from(e: AbstractionError) -> Self {
        match e {
            AbstractionError::Crf(CrfError::NonFinite { .. }) => {
                CliError::Internal(e.to_string())
            }
            AbstractionError::Crf(CrfError::Dimension(_)) => CliError::Internal(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<EvaluationError> for CliError {
    fn from(e: EvaluationError) -> Self {
        match e {
            EvaluationError::Abstraction(inner) => inner.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::BadPolicy(_) => CliError::Input(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn write_output(path: &Path, data: &str) -> Result<(), CliError> {
    fs::write(path, data)
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

#[derive(Parser, Debug)]
#[command(
    name = "evabs",
    about = "Abstract sensor-level event logs into human-activity-level logs",
    version
)]
pub struct Cli {
    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: number of processors).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML config file mirroring every flag; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert a sensor CSV (timestamp,sensor_id,state) into a sensor-level XES log.
    Ingest(IngestArgs),
    /// Generate an annotated synthetic log from the built-in hierarchical model.
    Generate(GenerateArgs),
    /// Train an abstractor on an annotated XES log.
    Train(TrainArgs),
    /// Annotate a log with a trained abstractor and collapse label runs.
    Abstract(AbstractArgs),
    /// Leave-one-trace-out cross-validation on an annotated XES log.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Input CSV path.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output XES path.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Zone offset for day segmentation, e.g. +01:00.
    #[arg(long)]
    timezone: Option<String>,
    /// Local time of day at which cases are cut, e.g. 00:00.
    #[arg(long)]
    boundary: Option<String>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Number of traces to simulate.
    #[arg(long)]
    traces: Option<usize>,
    /// Output XES path.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Probability of stopping at a final marking.
    #[arg(long)]
    stop_probability: Option<f64>,
    /// Step budget per trace before it is resampled.
    #[arg(long)]
    max_steps: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct FeatureArgs {
    /// N-gram spec `attribute_key:n`, repeatable (e.g. concept:name:2).
    #[arg(long = "ngram")]
    ngrams: Vec<String>,
    /// Circular-time period (day, week, month), repeatable.
    #[arg(long = "period")]
    periods: Vec<Period>,
    /// Lifecycle value whose closing durations are modeled, repeatable.
    #[arg(long = "lifecycle")]
    lifecycles: Vec<String>,
    /// Cap on mixture components per fitted model.
    #[arg(long)]
    max_components: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct TrainingArgs {
    /// L1 regularization strength.
    #[arg(long)]
    l1_strength: Option<f64>,
    /// Maximum optimizer iterations.
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Convergence tolerance on the objective change.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Annotated XES input path.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output path for the abstractor model file.
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[command(flatten)]
    features: FeatureArgs,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Args, Debug)]
struct AbstractArgs {
    /// Trained abstractor model path.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Input XES path (labels not required).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output XES path for the collapsed human-activity-level log.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Annotated XES input path.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output path for the JSON evaluation report.
    #[arg(long)]
    report_out: Option<PathBuf>,
    #[command(flatten)]
    features: FeatureArgs,
    #[command(flatten)]
    training: TrainingArgs,
}

// ---- config file ----

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    threads: Option<usize>,
    ingest: Option<IngestSection>,
    generate: Option<GenerateSection>,
    train: Option<TrainSection>,
    #[serde(rename = "abstract")]
    abstract_: Option<AbstractSection>,
    evaluate: Option<EvaluateSection>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct IngestSection {
    input: Option<PathBuf>,
    output: Option<PathBuf>,
    timezone: Option<String>,
    boundary: Option<String>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct GenerateSection {
    traces: Option<usize>,
    output: Option<PathBuf>,
    stop_probability: Option<f64>,
    max_steps: Option<usize>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FeatureSection {
    ngrams: Option<Vec<String>>,
    periods: Option<Vec<String>>,
    lifecycles: Option<Vec<String>>,
    max_components: Option<usize>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct TrainingSection {
    l1_strength: Option<f64>,
    max_iterations: Option<usize>,
    tolerance: Option<f64>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    input: Option<PathBuf>,
    model_out: Option<PathBuf>,
    #[serde(flatten)]
    features: FeatureSection,
    #[serde(flatten)]
    training: TrainingSection,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct AbstractSection {
    model: Option<PathBuf>,
    input: Option<PathBuf>,
    output: Option<PathBuf>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct EvaluateSection {
    input: Option<PathBuf>,
    report_out: Option<PathBuf>,
    #[serde(flatten)]
    features: FeatureSection,
    #[serde(flatten)]
    training: TrainingSection,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(path) => {
            let text = read_input(path)?;
            toml::from_str(&text)
                .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
        }
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Input(format!("missing required --{flag} (flag or config)")))
}

fn parse_ngram_flag(raw: &str) -> Result<(String, usize), CliError> {
    let (key, n) = raw.rsplit_once(':').ok_or_else(|| {
        CliError::Input(format!("--ngram expects attribute_key:n, got {raw:?}"))
    })?;
    let n: usize = n
        .parse()
        .map_err(|_| CliError::Input(format!("--ngram size must be an integer, got {raw:?}")))?;
    if n == 0 || key.is_empty() {
        return Err(CliError::Input(format!("invalid --ngram value {raw:?}")));
    }
    Ok((key.to_string(), n))
}

fn parse_timezone(raw: &str) -> Result<FixedOffset, CliError> {
    FixedOffset::from_str(raw)
        .map_err(|_| CliError::Input(format!("bad timezone {raw:?}; expected e.g. +01:00")))
}

fn parse_boundary(raw: &str) -> Result<NaiveTime, CliError> {
    NaiveTime::parse_from_str(raw, "%H:%M")
        .or_else(|_| NaiveTime::parse_from_str(raw, "%H:%M:%S"))
        .map_err(|_| CliError::Input(format!("bad boundary {raw:?}; expected e.g. 00:00")))
}

fn resolve_features(
    args: &FeatureArgs,
    section: &FeatureSection,
) -> Result<FeatureConfig, CliError> {
    let ngram_raws = if args.ngrams.is_empty() {
        section.ngrams.clone().unwrap_or_default()
    } else {
        args.ngrams.clone()
    };
    let ngrams = ngram_raws
        .iter()
        .map(|raw| parse_ngram_flag(raw))
        .collect::<Result<Vec<_>, _>>()?;
    let periods = if args.periods.is_empty() {
        section
            .periods
            .clone()
            .unwrap_or_default()
            .iter()
            .map(|p| Period::from_str(p).map_err(CliError::Input))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        args.periods.clone()
    };
    let lifecycle_values = if args.lifecycles.is_empty() {
        section.lifecycles.clone().unwrap_or_default()
    } else {
        args.lifecycles.clone()
    };
    let max_components = args
        .max_components
        .or(section.max_components)
        .unwrap_or(8);
    if max_components == 0 {
        return Err(CliError::Input("--max-components must be ≥ 1".into()));
    }
    Ok(FeatureConfig {
        ngrams,
        periods,
        lifecycle_values,
        max_components,
    })
}

fn resolve_training(
    args: &TrainingArgs,
    section: &TrainingSection,
    seed: u64,
) -> Result<TrainConfig, CliError> {
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        l1_strength: args.l1_strength.or(section.l1_strength).unwrap_or(defaults.l1_strength),
        max_iterations: args
            .max_iterations
            .or(section.max_iterations)
            .unwrap_or(defaults.max_iterations),
        tolerance: args.tolerance.or(section.tolerance).unwrap_or(defaults.tolerance),
        seed,
    };
    if config.l1_strength < 0.0 {
        return Err(CliError::Input("--l1-strength must be ≥ 0".into()));
    }
    if config.tolerance <= 0.0 {
        return Err(CliError::Input("--tolerance must be > 0".into()));
    }
    Ok(config)
}

fn standard_extensions() -> [ExtensionDecl; 3] {
    [
        ExtensionDecl {
            name: "Concept".into(),
            prefix: "concept".into(),
            uri: "http://www.xes-standard.org/concept.xesext".into(),
        },
        ExtensionDecl {
            name: "Time".into(),
            prefix: "time".into(),
            uri: "http://www.xes-standard.org/time.xesext".into(),
        },
        ExtensionDecl {
            name: "Lifecycle".into(),
            prefix: "lifecycle".into(),
            uri: "http://www.xes-standard.org/lifecycle.xesext".into(),
        },
    ]
}

fn cmd_ingest(args: &IngestArgs, section: &IngestSection) -> Result<(), CliError> {
    let input = required(args.input.clone().or_else(|| section.input.clone()), "input")?;
    let output = required(args.output.clone().or_else(|| section.output.clone()), "output")?;
    let timezone = parse_timezone(
        args.timezone
            .as_deref()
            .or(section.timezone.as_deref())
            .unwrap_or("+00:00"),
    )?;
    let boundary = parse_boundary(
        args.boundary
            .as_deref()
            .or(section.boundary.as_deref())
            .unwrap_or("00:00"),
    )?;

    let csv_text = read_input(&input)?;
    let readings = read_sensor_csv(csv_text.as_bytes())?;
    let events = readings_to_events(&readings)?;
    let policy = SegmentationPolicy { boundary, timezone };
    let mut log = segment_cases(events, &policy)?;
    log.extensions.extend(standard_extensions());

    eprintln!(
        "ingested {} readings into {} events across {} traces",
        readings.len(),
        log.total_events(),
        log.traces.len()
    );
    write_output(&output, &write_xes(&log)?)
}

fn cmd_generate(args: &GenerateArgs, section: &GenerateSection, seed: u64) -> Result<(), CliError> {
    let traces = args.traces.or(section.traces).unwrap_or(30);
    let output = required(args.output.clone().or_else(|| section.output.clone()), "output")?;
    let policy = StopPolicy {
        max_steps: args.max_steps.or(section.max_steps).unwrap_or(500),
        final_marking_stop_probability: args
            .stop_probability
            .or(section.stop_probability)
            .unwrap_or(0.5),
    };
    if traces == 0 {
        return Err(CliError::Input("--traces must be ≥ 1".into()));
    }

    let model = motivating_example();
    let log = simulate(&model, traces, seed, &policy)?;
    eprintln!(
        "generated {} traces with {} events (seed {seed})",
        log.traces.len(),
        log.total_events()
    );
    write_output(&output, &write_xes(&log)?)
}

fn cmd_train(args: &TrainArgs, section: &TrainSection, seed: u64) -> Result<(), CliError> {
    let input = required(args.input.clone().or_else(|| section.input.clone()), "input")?;
    let model_out = required(
        args.model_out.clone().or_else(|| section.model_out.clone()),
        "model-out",
    )?;
    let feature_config = resolve_features(&args.features, &section.features)?;
    let train_config = resolve_training(&args.training, &section.training, seed)?;

    let log = parse_xes(&read_input(&input)?)?;
    let trained = train_abstractor(&log, &feature_config, &train_config)?;
    eprintln!(
        "labels: [{}]",
        trained.model.label_alphabet.join(", ")
    );
    eprintln!(
        "observation features: {}; nonzero weights: {}/{}; final objective: {:.6}; iterations: {}",
        trained.model.registry.len(),
        trained.nonzero_weights,
        trained.model.crf.weights.len(),
        trained.final_objective,
        trained.iterations
    );
    write_output(&model_out, &trained.model.to_json())
}

fn cmd_abstract(args: &AbstractArgs, section: &AbstractSection) -> Result<(), CliError> {
    let model_path = required(args.model.clone().or_else(|| section.model.clone()), "model")?;
    let input = required(args.input.clone().or_else(|| section.input.clone()), "input")?;
    let output = required(args.output.clone().or_else(|| section.output.clone()), "output")?;

    let model = AbstractorModel::from_json(&read_input(&model_path)?)?;
    let log = parse_xes(&read_input(&input)?)?;
    let annotated = annotate(&model, &log)?;
    let mut collapsed = collapse_log(&annotated)?;
    collapsed.extensions.extend(standard_extensions());
    eprintln!(
        "abstracted {} sensor events into {} activity events across {} traces",
        log.total_events(),
        collapsed.total_events(),
        collapsed.traces.len()
    );
    write_output(&output, &write_xes(&collapsed)?)
}

fn cmd_evaluate(args: &EvaluateArgs, section: &EvaluateSection, seed: u64) -> Result<(), CliError> {
    let input = required(args.input.clone().or_else(|| section.input.clone()), "input")?;
    let report_out = required(
        args.report_out.clone().or_else(|| section.report_out.clone()),
        "report-out",
    )?;
    let feature_config = resolve_features(&args.features, &section.features)?;
    let train_config = resolve_training(&args.training, &section.training, seed)?;

    let log = parse_xes(&read_input(&input)?)?;
    let report = loto_cv(&log, &feature_config, &train_config)?;
    for fold in &report.folds {
        eprintln!(
            "fold {}: dls={:.4} raw={:.4} predicted={} ground_truth={}",
            fold.held_out_case_id,
            fold.dls,
            fold.raw_event_dls,
            fold.predicted_sequence.len(),
            fold.ground_truth_sequence.len()
        );
    }
    eprintln!("mean dls over {} folds: {:.4}", report.folds.len(), report.mean_dls);
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Internal(format!("report serialization: {e}")))?;
    write_output(&report_out, &json)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let config = load_config(cli.config.as_deref())?;
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    if let Some(threads) = cli.threads.or(config.threads) {
        if threads == 0 {
            return Err(CliError::Input("--threads must be ≥ 1".into()));
        }
        // ignore the error if a pool already exists (repeated calls in-process)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match &cli.command {
        Command::Ingest(args) => cmd_ingest(args, &config.ingest.unwrap_or_default()),
        Command::Generate(args) => cmd_generate(args, &config.generate.unwrap_or_default(), seed),
        Command::Train(args) => cmd_train(args, &config.train.unwrap_or_default(), seed),
        Command::Abstract(args) => cmd_abstract(args, &config.abstract_.unwrap_or_default()),
        Command::Evaluate(args) => cmd_evaluate(args, &config.evaluate.unwrap_or_default(), seed),
    }
}

/// Entry point used by the binary.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {}", error.message());
            error.exit_code()
        }
    }
}
