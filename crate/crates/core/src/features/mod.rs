//! Feature families for the sequence labeler.
//!
//! Three families are supported: categorical n-gram models over event
//! attributes, von Mises mixtures over circular views of the timestamp,
//! and Gaussian mixtures over lifecycle-step durations. A feature registry
//! is an ordered list of specs, one per (family instance, label); the
//! extracted vectors feed the CRF as observation features.

pub mod bessel;
mod gaussian;
mod lifecycle;
mod ngram;
mod time;
mod vonmises;

pub use gaussian::{fit_gmm, fit_gmm_detailed, GaussianComponent, GaussianMixture, GmmFit, STDDEV_FLOOR};
pub use lifecycle::{pair_lifecycles, LifecyclePair, LifecyclePairing};
pub use ngram::{fit_ngram, histories, NGramModel, BOUNDARY_TOKEN, MISSING_TOKEN, SMOOTHING_ALPHA};
pub use time::{timestamp_to_angle, Period};
pub use vonmises::{
    circular_distance, fit_vmmm, fit_vmmm_detailed, VmmmFit, VonMisesComponent, VonMisesMixture,
    KAPPA_MAX,
};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive_seed;
use crate::xes::{EventLog, Trace};

/// EM stops when an iteration gains less log-likelihood than this.
pub const EM_TOLERANCE: f64 = 1e-6;
/// Hard iteration cap per EM run.
pub const EM_MAX_ITERATIONS: usize = 500;
/// Independent seedings per component count; best likelihood wins.
pub const EM_RESTARTS: usize = 5;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("{0}: empty input")]
    EmptyInput(&'static str),
    #[error("missing label: {0}")]
    MissingLabel(String),
    #[error("label {0:?} is not in the model alphabet")]
    UnknownLabel(String),
    #[error("history length mismatch: expected {expected}, got {got}")]
    HistoryLength { expected: usize, got: usize },
    #[error("trace {case_id:?}, event {event}: missing timestamp")]
    MissingTimestamp { case_id: String, event: usize },
    #[error("no fitted model for feature spec {0}")]
    ModelMissing(String),
    #[error("invalid feature configuration: {0}")]
    Config(String),
}

/// Bayesian Information Criterion; lower is better.
pub fn bic(log_likelihood: f64, parameter_count: usize, sample_count: usize) -> f64 {
    parameter_count as f64 * (sample_count as f64).ln() - 2.0 * log_likelihood
}

/// Log-likelihood trajectories of every EM run performed during a fit,
/// ordered by (component count, restart).
#[derive(Debug, Clone, Default)]
pub struct EmRuns {
    pub trajectories: Vec<Vec<f64>>,
}

/// k-means++-style seeding: subsequent centers are drawn proportionally to
/// the squared distance to the nearest already-chosen center.
fn seed_centers(
    data: &[f64],
    k: usize,
    rng: &mut ChaCha8Rng,
    dist: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let mut centers = Vec::with_capacity(k);
    centers.push(data[rng.random_range(0..data.len())]);
    while centers.len() < k {
        let weights: Vec<f64> = data
            .iter()
            .map(|&x| {
                let nearest = centers
                    .iter()
                    .map(|&c| dist(x, c))
                    .fold(f64::INFINITY, f64::min);
                nearest * nearest
            })
            .collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            centers.push(data[rng.random_range(0..data.len())]);
            continue;
        }
        let mut draw = rng.random::<f64>() * total;
        let mut chosen = data.len() - 1;
        for (i, &w) in weights.iter().enumerate() {
            if draw < w {
                chosen = i;
                break;
            }
            draw -= w;
        }
        centers.push(data[chosen]);
    }
    centers
}

/// Declarative description of one observation feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FeatureSpec {
    /// Smoothed probability of `label` given the n-gram of `attribute_key`
    /// values ending at the current event.
    NGram {
        attribute_key: String,
        n: usize,
        label: String,
    },
    /// Mixture density of the event's position in the period, fitted on
    /// training events carrying `label`.
    CircularTime { period: Period, label: String },
    /// Mixture density of the duration closed at this event against the
    /// preceding `lifecycle_value` step, fitted per label; 0 when the
    /// event closes no such step.
    LifecycleDuration {
        label: String,
        lifecycle_value: String,
    },
}

impl std::fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureSpec::NGram { attribute_key, n, label } => {
                write!(f, "ngram({attribute_key}, n={n}, label={label})")
            }
            FeatureSpec::CircularTime { period, label } => {
                write!(f, "circular_time({period}, label={label})")
            }
            FeatureSpec::LifecycleDuration { label, lifecycle_value } => {
                write!(f, "lifecycle_duration(label={label}, from={lifecycle_value})")
            }
        }
    }
}

/// Fitted circular-time model for one (period, label) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircularTimeModel {
    pub period: Period,
    pub label: String,
    pub mixture: VonMisesMixture,
}

/// Fitted duration model for one (label, lifecycle value) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationModel {
    pub label: String,
    pub lifecycle_value: String,
    pub mixture: GaussianMixture,
}

/// All fitted models backing a feature registry.
///
/// A (label, lifecycle value) pair that produced no training durations has
/// no duration model; its feature is identically 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FittedFeatureModels {
    pub ngrams: Vec<NGramModel>,
    pub circular: Vec<CircularTimeModel>,
    pub durations: Vec<DurationModel>,
}

impl FittedFeatureModels {
    fn ngram(&self, attribute_key: &str, n: usize) -> Option<&NGramModel> {
        self.ngrams
            .iter()
            .find(|m| m.attribute_key == attribute_key && m.n == n)
    }

    fn circular(&self, period: Period, label: &str) -> Option<&VonMisesMixture> {
        self.circular
            .iter()
            .find(|m| m.period == period && m.label == label)
            .map(|m| &m.mixture)
    }

    fn duration(&self, label: &str, lifecycle_value: &str) -> Option<&GaussianMixture> {
        self.durations
            .iter()
            .find(|m| m.label == label && m.lifecycle_value == lifecycle_value)
            .map(|m| &m.mixture)
    }
}

/// Dense observation-feature values for one event, ordered like the
/// registry that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Fits every model a registry needs from an annotated log.
///
/// Mixture fits use seeds derived from `seed` and the spec position, so
/// the result is deterministic for a fixed registry and log.
pub fn fit_models(
    annotated: &EventLog,
    registry: &[FeatureSpec],
    max_components: usize,
    seed: u64,
) -> Result<FittedFeatureModels, FeatureError> {
    let mut models = FittedFeatureModels::default();

    for (index, spec) in registry.iter().enumerate() {
        let spec_seed = derive_seed(seed, index as u64);
        match spec {
            FeatureSpec::NGram { attribute_key, n, .. } => {
                if models.ngram(attribute_key, *n).is_none() {
                    models
                        .ngrams
                        .push(fit_ngram(annotated, attribute_key, *n)?);
                }
            }
            FeatureSpec::CircularTime { period, label } => {
                if models.circular(*period, label).is_none() {
                    let mut angles = Vec::new();
                    for trace in &annotated.traces {
                        for (i, event) in trace.events.iter().enumerate() {
                            if event.label() != Some(label) {
                                continue;
                            }
                            let ts = event.timestamp().ok_or_else(|| {
                                FeatureError::MissingTimestamp {
                                    case_id: trace.case_id.clone(),
                                    event: i,
                                }
                            })?;
                            angles.push(timestamp_to_angle(ts, *period, *ts.offset()));
                        }
                    }
                    if angles.is_empty() {
                        return Err(FeatureError::Config(format!(
                            "no training events labeled {label:?} for {spec}"
                        )));
                    }
                    models.circular.push(CircularTimeModel {
                        period: *period,
                        label: label.clone(),
                        mixture: fit_vmmm(&angles, max_components, spec_seed)?,
                    });
                }
            }
            FeatureSpec::LifecycleDuration { label, lifecycle_value } => {
                if models.duration(label, lifecycle_value).is_none() {
                    let mut durations = Vec::new();
                    for trace in &annotated.traces {
                        let pairing = pair_lifecycles(trace);
                        for pair in pairing.pairs {
                            if pair.from_value == *lifecycle_value
                                && trace.events[pair.event_index].label() == Some(label)
                            {
                                durations.push(pair.duration_seconds);
                            }
                        }
                    }
                    if !durations.is_empty() {
                        models.durations.push(DurationModel {
                            label: label.clone(),
                            lifecycle_value: lifecycle_value.clone(),
                            mixture: fit_gmm(&durations, max_components, spec_seed)?,
                        });
                    }
                }
            }
        }
    }
    Ok(models)
}

/// Evaluates the registry on one trace, producing one vector per event.
pub fn extract_features(
    trace: &Trace,
    registry: &[FeatureSpec],
    models: &FittedFeatureModels,
) -> Result<Vec<FeatureVector>, FeatureError> {
    // shared per-trace precomputations
    let mut history_cache: Vec<((String, usize), Vec<Vec<String>>)> = Vec::new();
    for spec in registry {
        if let FeatureSpec::NGram { attribute_key, n, .. } = spec {
            let key = (attribute_key.clone(), *n);
            if !history_cache.iter().any(|(k, _)| *k == key) {
                let hists = histories(trace, attribute_key, *n);
                history_cache.push((key, hists));
            }
        }
    }
    let needs_durations = registry
        .iter()
        .any(|s| matches!(s, FeatureSpec::LifecycleDuration { .. }));
    let pairing = if needs_durations {
        pair_lifecycles(trace)
    } else {
        LifecyclePairing::default()
    };

    let mut vectors = Vec::with_capacity(trace.events.len());
    for (t, event) in trace.events.iter().enumerate() {
        let mut values = Vec::with_capacity(registry.len());
        for spec in registry {
            let value = match spec {
                FeatureSpec::NGram { attribute_key, n, label } => {
                    let model = models.ngram(attribute_key, *n).ok_or_else(|| {
                        FeatureError::ModelMissing(spec.to_string())
                    })?;
                    let key = (attribute_key.clone(), *n);
                    let hists = &history_cache
                        .iter()
                        .find(|(k, _)| *k == key)
                        .expect("cached above")
                        .1;
                    model.probability(&hists[t], label)?
                }
                FeatureSpec::CircularTime { period, label } => {
                    let mixture = models.circular(*period, label).ok_or_else(|| {
                        FeatureError::ModelMissing(spec.to_string())
                    })?;
                    let ts = event.timestamp().ok_or_else(|| {
                        FeatureError::MissingTimestamp {
                            case_id: trace.case_id.clone(),
                            event: t,
                        }
                    })?;
                    mixture.density(timestamp_to_angle(ts, *period, *ts.offset()))
                }
                FeatureSpec::LifecycleDuration { label, lifecycle_value } => {
                    let closed = pairing.pairs.iter().find(|p| {
                        p.event_index == t && p.from_value == *lifecycle_value
                    });
                    match (closed, models.duration(label, lifecycle_value)) {
                        (Some(pair), Some(mixture)) => mixture.density(pair.duration_seconds),
                        _ => 0.0,
                    }
                }
            };
            debug_assert!(value.is_finite(), "non-finite feature value for {spec}");
            values.push(value);
        }
        vectors.push(FeatureVector(values));
    }
    Ok(vectors)
}
