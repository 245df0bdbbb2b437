//! Categorical n-gram models over event attributes.
//!
//! For every n-gram of attribute values observed in the training traces,
//! the model stores an add-alpha-smoothed distribution over the activity
//! labels of the n-th event. Queries with unseen histories fall back to
//! the uniform distribution so downstream decoding always sees finite
//! values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::xes::EventLog;

use super::FeatureError;

/// Padding token standing in for positions before the start of a trace.
pub const BOUNDARY_TOKEN: &str = "\u{1}boundary";
/// Token contributed by events that lack the modeled attribute.
pub const MISSING_TOKEN: &str = "\u{1}missing";
/// Add-alpha smoothing constant.
pub const SMOOTHING_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGramModel {
    pub attribute_key: String,
    pub n: usize,
    pub label_alphabet: Vec<String>,
    /// Smoothed label distribution per observed n-gram.
    #[serde(with = "table_serde")]
    table: BTreeMap<Vec<String>, Vec<f64>>,
}

mod table_serde {
    use std::collections::BTreeMap;

    use serde::de::Deserializer;
    use serde::ser::Serializer;
    use serde::{Deserialize, Serialize};

    pub fn serialize<S: Serializer>(
        table: &BTreeMap<Vec<String>, Vec<f64>>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        table.iter().collect::<Vec<_>>().serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<BTreeMap<Vec<String>, Vec<f64>>, D::Error> {
        Vec::<(Vec<String>, Vec<f64>)>::deserialize(deserializer)
            .map(|entries| entries.into_iter().collect())
    }
}

/// The attribute-value token of one event for history building.
fn token(event: &crate::xes::Event, key: &str) -> String {
    event
        .get(key)
        .map(|v| v.to_string())
        .unwrap_or_else(|| MISSING_TOKEN.to_string())
}

/// Sliding n-gram histories for one trace: position t covers the values of
/// events t-n+1..=t, left-padded with the boundary token.
pub fn histories(trace: &crate::xes::Trace, key: &str, n: usize) -> Vec<Vec<String>> {
    let tokens: Vec<String> = trace.events.iter().map(|e| token(e, key)).collect();
    (0..tokens.len())
        .map(|t| {
            (0..n)
                .map(|offset| {
                    let back = n - 1 - offset;
                    if back > t {
                        BOUNDARY_TOKEN.to_string()
                    } else {
                        tokens[t - back].clone()
                    }
                })
                .collect()
        })
        .collect()
}

/// Estimates an n-gram model from an annotated log.
///
/// The stored probability of label l given history h is
/// (count(h, l) + alpha) / (count(h) + alpha * |labels|).
pub fn fit_ngram(
    annotated: &EventLog,
    attribute_key: &str,
    n: usize,
) -> Result<NGramModel, FeatureError> {
    if annotated.total_events() == 0 {
        return Err(FeatureError::EmptyInput("fit_ngram"));
    }
    if n == 0 {
        return Err(FeatureError::Config("n-gram size must be ≥ 1".into()));
    }
    let label_alphabet = annotated
        .label_alphabet()
        .map_err(|e| FeatureError::MissingLabel(e.to_string()))?;
    let label_index: BTreeMap<&str, usize> = label_alphabet
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();

    let mut counts: BTreeMap<Vec<String>, Vec<u64>> = BTreeMap::new();
    for trace in &annotated.traces {
        let labels = trace
            .labels()
            .map_err(|e| FeatureError::MissingLabel(e.to_string()))?;
        for (history, label) in histories(trace, attribute_key, n).into_iter().zip(labels) {
            let row = counts
                .entry(history)
                .or_insert_with(|| vec![0; label_alphabet.len()]);
            row[label_index[label]] += 1;
        }
    }

    let l = label_alphabet.len() as f64;
    let table = counts
        .into_iter()
        .map(|(history, row)| {
            let total: u64 = row.iter().sum();
            let denom = total as f64 + SMOOTHING_ALPHA * l;
            let probs = row
                .into_iter()
                .map(|c| (c as f64 + SMOOTHING_ALPHA) / denom)
                .collect();
            (history, probs)
        })
        .collect();

    Ok(NGramModel {
        attribute_key: attribute_key.to_string(),
        n,
        label_alphabet,
        table,
    })
}

impl NGramModel {
    /// Smoothed probability of `label` given an exact-length history;
    /// unseen histories yield the uniform distribution.
    pub fn probability(&self, history: &[String], label: &str) -> Result<f64, FeatureError> {
        if history.len() != self.n {
            return Err(FeatureError::HistoryLength {
                expected: self.n,
                got: history.len(),
            });
        }
        let index = self
            .label_alphabet
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| FeatureError::UnknownLabel(label.to_string()))?;
        Ok(match self.table.get(history) {
            Some(probs) => probs[index],
            None => 1.0 / self.label_alphabet.len() as f64,
        })
    }

    pub fn observed_ngrams(&self) -> usize {
        self.table.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xes::{AttributeValue, Event, EventLog, Trace, CONCEPT_NAME, LABEL};

    fn event(name: &str, label: &str) -> Event {
        Event::from_attrs([
            (CONCEPT_NAME, AttributeValue::String(name.into())),
            (LABEL, AttributeValue::String(label.into())),
        ])
    }

    fn log_of(rows: &[(&str, &str)]) -> EventLog {
        let mut trace = Trace::new("1");
        trace.events = rows.iter().map(|(n, l)| event(n, l)).collect();
        EventLog::new(vec![trace])
    }

    #[test]
    fn unanimous_counts_are_near_one() {
        let log = log_of(&[
            ("MC", "TakingMedicine"),
            ("MC", "TakingMedicine"),
            ("MC", "TakingMedicine"),
            ("D", "Eating"),
        ]);
        let model = fit_ngram(&log, CONCEPT_NAME, 1).unwrap();
        let p = model
            .probability(&["MC".to_string()], "TakingMedicine")
            .unwrap();
        // (3 + 0.01) / (3 + 0.01 * 2)
        assert!((p - 3.01 / 3.02).abs() < 1e-12, "p = {p}");
    }

    #[test]
    fn hand_counted_smoothed_ratio() {
        let log = log_of(&[
            ("DCC", "TakingMedicine"),
            ("DCC", "TakingMedicine"),
            ("DCC", "TakingMedicine"),
            ("DCC", "Eating"),
        ]);
        let model = fit_ngram(&log, CONCEPT_NAME, 1).unwrap();
        let h = vec!["DCC".to_string()];
        let p_tm = model.probability(&h, "TakingMedicine").unwrap();
        let p_e = model.probability(&h, "Eating").unwrap();
        assert!((p_tm - 3.01 / 4.02).abs() < 1e-12);
        assert!((p_e - 1.01 / 4.02).abs() < 1e-12);
    }

    #[test]
    fn unseen_history_is_uniform() {
        let log = log_of(&[("MC", "TakingMedicine"), ("D", "Eating")]);
        let model = fit_ngram(&log, CONCEPT_NAME, 1).unwrap();
        let p = model
            .probability(&["Water".to_string()], "Eating")
            .unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn unknown_label_is_an_error() {
        let log = log_of(&[("MC", "TakingMedicine"), ("D", "Eating")]);
        let model = fit_ngram(&log, CONCEPT_NAME, 1).unwrap();
        assert!(model
            .probability(&["MC".to_string()], "Sleeping")
            .is_err());
    }

    #[test]
    fn histories_left_pad_with_boundary() {
        let log = log_of(&[("A", "x"), ("B", "x"), ("C", "x")]);
        let got = histories(&log.traces[0], CONCEPT_NAME, 2);
        assert_eq!(
            got,
            vec![
                vec![BOUNDARY_TOKEN.to_string(), "A".to_string()],
                vec!["A".to_string(), "B".to_string()],
                vec!["B".to_string(), "C".to_string()],
            ]
        );
    }

    #[test]
    fn missing_attribute_contributes_missing_token() {
        let mut trace = Trace::new("1");
        trace.events.push(event("A", "x"));
        let mut bare = Event::new();
        bare.set(LABEL, AttributeValue::String("x".into()));
        trace.events.push(bare);
        let log = EventLog::new(vec![trace]);
        let model = fit_ngram(&log, CONCEPT_NAME, 1).unwrap();
        let p = model
            .probability(&[MISSING_TOKEN.to_string()], "x")
            .unwrap();
        assert!(p > 0.9);
    }

    #[test]
    fn distributions_sum_to_one() {
        let log = log_of(&[
            ("MC", "a"),
            ("DCC", "b"),
            ("MC", "c"),
            ("DCC", "a"),
            ("W", "b"),
        ]);
        for n in 1..=3 {
            let model = fit_ngram(&log, CONCEPT_NAME, n).unwrap();
            for history in histories(&log.traces[0], CONCEPT_NAME, n) {
                let total: f64 = model
                    .label_alphabet
                    .clone()
                    .iter()
                    .map(|l| model.probability(&history, l).unwrap())
                    .sum();
                assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }
}
