//! Damerau-Levenshtein similarity and leave-one-trace-out cross-validation.
//!
//! The distance is the optimal-string-alignment variant: insertions,
//! deletions, substitutions and adjacent transpositions, with no substring
//! edited twice. Similarity normalizes by the longer sequence and
//! subtracts from one.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{
    fold_seed, predict_labels, train_abstractor, AbstractionError, FeatureConfig,
};
use crate::crf::TrainConfig;
use crate::xes::{EventLog, Trace, XesError, LABEL};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("leave-one-trace-out needs at least 2 traces, got {0}")]
    TooFewTraces(usize),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
    #[error(transparent)]
    Xes(#[from] XesError),
}

/// Optimal-string-alignment distance between two label sequences.
pub fn damerau_levenshtein<T: Eq>(a: &[T], b: &[T]) -> usize {
    let (n, m) = (a.len(), b.len());
    if n == 0 {
        return m;
    }
    if m == 0 {
        return n;
    }
    // rows for i-2, i-1 and i over positions of b
    let mut prev2 = vec![0usize; m + 1];
    let mut prev = (0..=m).collect::<Vec<_>>();
    let mut current = vec![0usize; m + 1];

    for i in 1..=n {
        current[0] = i;
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut best = (prev[j] + 1) // deletion
                .min(current[j - 1] + 1) // insertion
                .min(prev[j - 1] + cost); // substitution
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                best = best.min(prev2[j - 2] + 1); // adjacent transposition
            }
            current[j] = best;
        }
        std::mem::swap(&mut prev2, &mut prev);
        std::mem::swap(&mut prev, &mut current);
    }
    prev[m]
}

/// Damerau-Levenshtein similarity in [0, 1]; two empty sequences are
/// perfectly similar by convention.
pub fn dls<T: Eq>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - damerau_levenshtein(a, b) as f64 / longest as f64
}

/// Collapses consecutive duplicates: one symbol per run.
pub fn run_length<T: Clone + PartialEq>(sequence: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for item in sequence {
        if out.last() != Some(item) {
            out.push(item.clone());
        }
    }
    out
}

/// The trace's activity sequence: one symbol per run of equal labels.
pub fn ground_truth_sequence(trace: &Trace) -> Result<Vec<String>, XesError> {
    let labels = trace.labels()?;
    Ok(run_length(&labels)
        .into_iter()
        .map(str::to_string)
        .collect())
}

/// Result of one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub held_out_case_id: String,
    /// Similarity of the run-length-encoded activity sequences.
    pub dls: f64,
    /// Similarity of the raw per-event label sequences (diagnostic).
    pub raw_event_dls: f64,
    pub predicted_sequence: Vec<String>,
    pub ground_truth_sequence: Vec<String>,
}

/// Event-level confusion count for one (gold, predicted) label pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionEntry {
    pub gold: String,
    pub predicted: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub folds: Vec<FoldReport>,
    pub mean_dls: f64,
    pub confusion: Vec<ConfusionEntry>,
}

impl EvaluationReport {
    fn from_folds(folds: Vec<FoldReport>, confusion: BTreeMap<(String, String), u64>) -> Self {
        let mean_dls = folds.iter().map(|f| f.dls).sum::<f64>() / folds.len() as f64;
        EvaluationReport {
            folds,
            mean_dls,
            confusion: confusion
                .into_iter()
                .map(|((gold, predicted), count)| ConfusionEntry { gold, predicted, count })
                .collect(),
        }
    }
}

/// Leave-one-trace-out cross-validation with an arbitrary per-fold
/// predictor: given the training log, the held-out trace (labels hidden)
/// and the fold seed, produce one label per event. Folds run in parallel
/// and are assembled in fold-index order.
pub fn loto_cv_with<F>(
    annotated: &EventLog,
    seed: u64,
    predict: F,
) -> Result<EvaluationReport, EvaluationError>
where
    F: Fn(&EventLog, &Trace, u64) -> Result<Vec<String>, EvaluationError> + Sync,
{
    let n = annotated.traces.len();
    if n < 2 {
        return Err(EvaluationError::TooFewTraces(n));
    }
    for trace in &annotated.traces {
        trace.labels()?;
    }

    let fold_results: Vec<Result<(FoldReport, Vec<(String, String)>), EvaluationError>> = (0..n)
        .into_par_iter()
        .map(|fold| {
            let mut training = annotated.clone();
            let held_out = training.traces.remove(fold);
            let mut hidden = held_out.clone();
            for event in &mut hidden.events {
                event.remove(LABEL);
            }
            let predicted = predict(&training, &hidden, fold_seed(seed, fold))?;
            let gold: Vec<String> = held_out
                .labels()?
                .into_iter()
                .map(str::to_string)
                .collect();
            let pairs: Vec<(String, String)> = gold
                .iter()
                .zip(&predicted)
                .map(|(g, p)| (g.clone(), p.clone()))
                .collect();
            let predicted_runs = run_length(&predicted);
            let gold_runs = run_length(&gold);
            let report = FoldReport {
                held_out_case_id: held_out.case_id.clone(),
                dls: dls(&predicted_runs, &gold_runs),
                raw_event_dls: dls(&predicted, &gold),
                predicted_sequence: predicted_runs,
                ground_truth_sequence: gold_runs,
            };
            Ok((report, pairs))
        })
        .collect();

    let mut folds = Vec::with_capacity(n);
    let mut confusion: BTreeMap<(String, String), u64> = BTreeMap::new();
    for result in fold_results {
        let (report, pairs) = result?;
        for pair in pairs {
            *confusion.entry(pair).or_insert(0) += 1;
        }
        folds.push(report);
    }
    Ok(EvaluationReport::from_folds(folds, confusion))
}

/// Full leave-one-trace-out evaluation of the abstraction pipeline.
///
/// Each fold trains on all other traces with a seed derived from the fold
/// index and annotates the held-out trace with its labels hidden.
pub fn loto_cv(
    annotated: &EventLog,
    feature_config: &FeatureConfig,
    train_config: &TrainConfig,
) -> Result<EvaluationReport, EvaluationError> {
    loto_cv_with(annotated, train_config.seed, |training, hidden, fold_seed| {
        let fold_config = TrainConfig {
            seed: fold_seed,
            ..train_config.clone()
        };
        let trained = train_abstractor(training, feature_config, &fold_config)?;
        predict_labels(&trained.model, hidden).map_err(EvaluationError::Abstraction)
    })
}
