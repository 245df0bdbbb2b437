//! The abstraction pipeline: train an abstractor on annotated traces,
//! annotate unannotated traces, and collapse label runs into high-level
//! start/complete events.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crf::{self, CrfError, CrfInstance, CrfModel, TrainConfig};
use crate::derive_seed;
use crate::features::{
    extract_features, fit_models, FeatureError, FeatureSpec, FittedFeatureModels, Period,
};
use crate::xes::{
    AttributeValue, Event, EventLog, Trace, XesError, CONCEPT_NAME, LABEL, LIFECYCLE_TRANSITION,
    TIME_TIMESTAMP,
};

/// Current serialization version of [`AbstractorModel`].
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AbstractionError {
    #[error("training log must contain at least 2 distinct labels, found {0}")]
    SingleLabel(usize),
    #[error("feature configuration requests no observation features")]
    NoFeatures,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Crf(#[from] CrfError),
    #[error(transparent)]
    Xes(#[from] XesError),
    #[error("trace {case_id:?}, event {event}: {message}")]
    Event {
        case_id: String,
        event: usize,
        message: String,
    },
    #[error("unsupported abstractor format_version {found} (expected {FORMAT_VERSION})")]
    UnknownVersion { found: u64 },
    #[error("abstractor file: {0}")]
    Format(String),
}

/// Which feature families to instantiate; one spec per family instance and
/// label is added to the registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// (attribute key, n-gram size) pairs.
    pub ngrams: Vec<(String, usize)>,
    /// Circular-time periods.
    pub periods: Vec<Period>,
    /// Lifecycle values whose closing durations are modeled.
    pub lifecycle_values: Vec<String>,
    /// Cap on mixture components per fitted model.
    pub max_components: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            ngrams: vec![(CONCEPT_NAME.to_string(), 2)],
            periods: vec![Period::Day],
            lifecycle_values: Vec::new(),
            max_components: 8,
        }
    }
}

impl FeatureConfig {
    pub fn is_empty(&self) -> bool {
        self.ngrams.is_empty() && self.periods.is_empty() && self.lifecycle_values.is_empty()
    }

    /// Instantiates the ordered registry for a label alphabet.
    pub fn registry(&self, alphabet: &[String]) -> Vec<FeatureSpec> {
        let mut registry = Vec::new();
        for (attribute_key, n) in &self.ngrams {
            for label in alphabet {
                registry.push(FeatureSpec::NGram {
                    attribute_key: attribute_key.clone(),
                    n: *n,
                    label: label.clone(),
                });
            }
        }
        for period in &self.periods {
            for label in alphabet {
                registry.push(FeatureSpec::CircularTime {
                    period: *period,
                    label: label.clone(),
                });
            }
        }
        for value in &self.lifecycle_values {
            for label in alphabet {
                registry.push(FeatureSpec::LifecycleDuration {
                    label: label.clone(),
                    lifecycle_value: value.clone(),
                });
            }
        }
        registry
    }
}

/// Serializable bundle of everything needed to annotate a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractorModel {
    pub format_version: u32,
    pub label_alphabet: Vec<String>,
    pub registry: Vec<FeatureSpec>,
    pub models: FittedFeatureModels,
    pub crf: CrfModel,
}

impl AbstractorModel {
    /// Versioned structured-text form (JSON).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AbstractionError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| AbstractionError::Format(e.to_string()))?;
        let found = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| AbstractionError::Format("missing format_version".into()))?;
        if found != u64::from(FORMAT_VERSION) {
            return Err(AbstractionError::UnknownVersion { found });
        }
        serde_json::from_value(value).map_err(|e| AbstractionError::Format(e.to_string()))
    }
}

/// Training result with optimizer diagnostics.
#[derive(Debug, Clone)]
pub struct TrainedAbstractor {
    pub model: AbstractorModel,
    pub final_objective: f64,
    pub iterations: usize,
    pub nonzero_weights: usize,
}

fn crf_dataset(
    log: &EventLog,
    registry: &[FeatureSpec],
    models: &FittedFeatureModels,
    alphabet: &[String],
) -> Result<Vec<CrfInstance>, AbstractionError> {
    log.traces
        .iter()
        .map(|trace| {
            let features = extract_features(trace, registry, models)?;
            let labels = trace
                .labels()
                .map_err(|e| AbstractionError::Feature(FeatureError::MissingLabel(e.to_string())))?
                .into_iter()
                .map(|l| {
                    alphabet
                        .iter()
                        .position(|a| a == l)
                        .expect("label in alphabet")
                })
                .collect();
            Ok(CrfInstance { features, labels })
        })
        .collect()
}

/// Fits feature models and trains the CRF on an annotated log.
pub fn train_abstractor(
    annotated: &EventLog,
    feature_config: &FeatureConfig,
    train_config: &TrainConfig,
) -> Result<TrainedAbstractor, AbstractionError> {
    if feature_config.is_empty() {
        return Err(AbstractionError::NoFeatures);
    }
    let alphabet = annotated.label_alphabet()?;
    if alphabet.len() < 2 {
        return Err(AbstractionError::SingleLabel(alphabet.len()));
    }

    let registry = feature_config.registry(&alphabet);
    let models = fit_models(
        annotated,
        &registry,
        feature_config.max_components,
        train_config.seed,
    )?;
    let dataset = crf_dataset(annotated, &registry, &models, &alphabet)?;
    let zeroed = CrfModel::zeroed(alphabet.clone(), registry.len());
    let outcome = crf::train(&dataset, zeroed, train_config)?;

    Ok(TrainedAbstractor {
        model: AbstractorModel {
            format_version: FORMAT_VERSION,
            label_alphabet: alphabet,
            registry,
            models,
            crf: outcome.model,
        },
        final_objective: outcome.final_objective,
        iterations: outcome.iterations,
        nonzero_weights: outcome.nonzero_weights,
    })
}

/// Viterbi-decodes label indices for one trace.
pub fn predict_labels(
    model: &AbstractorModel,
    trace: &Trace,
) -> Result<Vec<String>, AbstractionError> {
    let features = extract_features(trace, &model.registry, &model.models)?;
    let path = crf::viterbi(&model.crf, &features)?;
    Ok(path
        .into_iter()
        .map(|j| model.label_alphabet[j].clone())
        .collect())
}

/// Returns a copy of the log where every event carries a predicted
/// `label` attribute; pre-existing labels are overwritten. No other
/// attribute is touched.
pub fn annotate(model: &AbstractorModel, log: &EventLog) -> Result<EventLog, AbstractionError> {
    let mut annotated = log.clone();
    for trace in &mut annotated.traces {
        let labels = predict_labels(model, trace)?;
        for (event, label) in trace.events.iter_mut().zip(labels) {
            event.set(LABEL, AttributeValue::String(label));
        }
    }
    annotated.global_event_attributes.insert(LABEL.to_string());
    Ok(annotated)
}

/// Collapses each maximal run of equal `label` values into two events: a
/// `start` at the run's first timestamp and a `complete` at its last, both
/// named after the label. A run of length one starts and completes at the
/// same instant. Trace attributes are preserved.
pub fn collapse(trace: &Trace) -> Result<Trace, AbstractionError> {
    let mut collapsed = Trace::new(trace.case_id.clone());
    collapsed.attributes = trace.attributes.clone();

    let mut runs: Vec<(String, usize, usize)> = Vec::new(); // (label, first, last)
    for (i, event) in trace.events.iter().enumerate() {
        let label = event.label().ok_or_else(|| AbstractionError::Event {
            case_id: trace.case_id.clone(),
            event: i,
            message: "missing \"label\" attribute".into(),
        })?;
        match runs.last_mut() {
            Some((current, _, last)) if current == label => *last = i,
            _ => runs.push((label.to_string(), i, i)),
        }
    }

    for (label, first, last) in runs {
        for (index, lifecycle) in [(first, "start"), (last, "complete")] {
            let source = &trace.events[index];
            let ts = source.timestamp().ok_or_else(|| AbstractionError::Event {
                case_id: trace.case_id.clone(),
                event: index,
                message: "missing \"time:timestamp\" attribute".into(),
            })?;
            collapsed.events.push(Event::from_attrs([
                (CONCEPT_NAME, AttributeValue::String(label.clone())),
                (TIME_TIMESTAMP, AttributeValue::timestamp(ts)),
                (LIFECYCLE_TRANSITION, AttributeValue::String(lifecycle.into())),
            ]));
        }
    }
    Ok(collapsed)
}

/// Collapses every trace of a labeled log into a human-activity-level log.
pub fn collapse_log(log: &EventLog) -> Result<EventLog, AbstractionError> {
    let traces = log
        .traces
        .iter()
        .map(collapse)
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = EventLog::new(traces);
    for key in [CONCEPT_NAME, TIME_TIMESTAMP, LIFECYCLE_TRANSITION] {
        out.global_event_attributes.insert(key.to_string());
    }
    out.classifiers = log.classifiers.clone();
    out.extensions = log.extensions.clone();
    Ok(out)
}

/// Convenience seed derivation for cross-validation folds.
pub fn fold_seed(base: u64, fold: usize) -> u64 {
    derive_seed(base, fold as u64)
}
