//! In-memory data model for XES-style event logs.
//!
//! Covers the subset of the XES meta-model the pipeline needs: logs made of
//! traces, traces made of events, and string/date/int/float/boolean
//! attributes at every level, plus log-level extension declarations, global
//! attribute declarations and classifiers. Nested and list attributes are
//! rejected.

mod xml;

pub use xml::{parse_xes, write_xes};

use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, FixedOffset, Timelike};
use indexmap::IndexMap;
use thiserror::Error;

/// Reserved attribute key for the sensor-level event name.
pub const CONCEPT_NAME: &str = "concept:name";
/// Reserved attribute key for the event timestamp.
pub const TIME_TIMESTAMP: &str = "time:timestamp";
/// Reserved attribute key for the lifecycle transition of an event.
pub const LIFECYCLE_TRANSITION: &str = "lifecycle:transition";
/// Reserved attribute key for the human-activity annotation.
pub const LABEL: &str = "label";

#[derive(Debug, Error)]
pub enum XesError {
    #[error("malformed XML at line {line}, column {column}: {message}")]
    Malformed {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported XES construct at line {line}, column {column}: {message}")]
    Unsupported {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("trace {trace}, event {event}: bad attribute {key:?}: {message}")]
    Attribute {
        trace: usize,
        event: usize,
        key: String,
        message: String,
    },
    #[error("invalid event log: {0}")]
    Invalid(String),
}

/// A typed XES attribute value.
///
/// Timestamps keep their zone offset and round-trip at millisecond
/// precision; equality follows `chrono` and compares the absolute instant.
#[derive(Debug, Clone, PartialEq)]
pub enum AttributeValue {
    String(String),
    Timestamp(DateTime<FixedOffset>),
    Int(i64),
    Float(f64),
    Boolean(bool),
}

impl AttributeValue {
    /// Millisecond-truncated timestamp value. All timestamps entering the
    /// data model pass through this so serialization is lossless.
    pub fn timestamp(ts: DateTime<FixedOffset>) -> Self {
        let nanos = ts.nanosecond() / 1_000_000 * 1_000_000;
        AttributeValue::Timestamp(ts.with_nanosecond(nanos).expect("valid nanos"))
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            AttributeValue::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_timestamp(&self) -> Option<DateTime<FixedOffset>> {
        match self {
            AttributeValue::Timestamp(ts) => Some(*ts),
            _ => None,
        }
    }
}

impl fmt::Display for AttributeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttributeValue::String(s) => f.write_str(s),
            AttributeValue::Timestamp(ts) => write!(f, "{}", xml::format_timestamp(*ts)),
            AttributeValue::Int(v) => write!(f, "{v}"),
            AttributeValue::Float(v) => write!(f, "{v}"),
            AttributeValue::Boolean(v) => write!(f, "{v}"),
        }
    }
}

/// A key/value pair as it appears in an XES document.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribute {
    pub key: String,
    pub value: AttributeValue,
}

/// One event: an ordered mapping from attribute key to value.
///
/// Insertion order is preserved so that serialization is deterministic;
/// inserting an existing key overwrites in place.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Event {
    attributes: IndexMap<String, AttributeValue>,
}

impl Event {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an event from key/value pairs, keeping the given order.
    pub fn from_attrs<I, K>(attrs: I) -> Self
    where
        I: IntoIterator<Item = (K, AttributeValue)>,
        K: Into<String>,
    {
        let mut event = Event::new();
        for (key, value) in attrs {
            event.set(key, value);
        }
        event
    }

    /// Sets an attribute, replacing any previous value for the key.
    pub fn set(&mut self, key: impl Into<String>, value: AttributeValue) {
        let key = key.into();
        assert!(!key.is_empty(), "attribute key must be non-empty");
        self.attributes.insert(key, value);
    }

    pub fn remove(&mut self, key: &str) -> Option<AttributeValue> {
        self.attributes.shift_remove(key)
    }

    /// Looks up an attribute value; absent keys yield `None`, never an error.
    pub fn get(&self, key: &str) -> Option<&AttributeValue> {
        self.attributes.get(key)
    }

    pub fn attributes(&self) -> impl Iterator<Item = (&str, &AttributeValue)> {
        self.attributes.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn concept_name(&self) -> Option<&str> {
        self.get(CONCEPT_NAME).and_then(AttributeValue::as_str)
    }

    pub fn timestamp(&self) -> Option<DateTime<FixedOffset>> {
        self.get(TIME_TIMESTAMP).and_then(AttributeValue::as_timestamp)
    }

    pub fn lifecycle(&self) -> Option<&str> {
        self.get(LIFECYCLE_TRANSITION).and_then(AttributeValue::as_str)
    }

    pub fn label(&self) -> Option<&str> {
        self.get(LABEL).and_then(AttributeValue::as_str)
    }
}

/// One trace: a case identifier, trace attributes and a time-ordered
/// sequence of events.
///
/// The case identifier is serialized as the trace's `concept:name`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub case_id: String,
    pub attributes: IndexMap<String, AttributeValue>,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn new(case_id: impl Into<String>) -> Self {
        Trace {
            case_id: case_id.into(),
            attributes: IndexMap::new(),
            events: Vec::new(),
        }
    }

    /// The `label` attribute of every event, in order. Errors on the first
    /// event missing it.
    pub fn labels(&self) -> Result<Vec<&str>, XesError> {
        self.events
            .iter()
            .enumerate()
            .map(|(i, e)| {
                e.label().ok_or_else(|| XesError::Invalid(format!(
                    "trace {:?}, event {i}: missing \"label\" attribute",
                    self.case_id
                )))
            })
            .collect()
    }
}

/// Declared XES extension.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExtensionDecl {
    pub name: String,
    pub prefix: String,
    pub uri: String,
}

/// Named list of event-attribute keys usable as an event classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classifier {
    pub name: String,
    pub keys: Vec<String>,
}

/// A full event log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    pub traces: Vec<Trace>,
    pub global_trace_attributes: BTreeSet<String>,
    pub global_event_attributes: BTreeSet<String>,
    pub classifiers: Vec<Classifier>,
    pub extensions: BTreeSet<ExtensionDecl>,
}

impl EventLog {
    pub fn new(traces: Vec<Trace>) -> Self {
        EventLog {
            traces,
            ..Default::default()
        }
    }

    /// Validates the structural invariants: non-empty attribute keys,
    /// globally declared attributes present everywhere, and per-trace
    /// non-decreasing timestamps when every event carries one.
    pub fn validate(&self) -> Result<(), XesError> {
        for (ti, trace) in self.traces.iter().enumerate() {
            for key in &self.global_trace_attributes {
                if key != CONCEPT_NAME && !trace.attributes.contains_key(key) {
                    return Err(XesError::Invalid(format!(
                        "global trace attribute {key:?} missing on trace {ti}"
                    )));
                }
            }
            for (ei, event) in trace.events.iter().enumerate() {
                for key in &self.global_event_attributes {
                    if event.get(key).is_none() {
                        return Err(XesError::Invalid(format!(
                            "global event attribute {key:?} missing on trace {ti}, event {ei}"
                        )));
                    }
                }
            }
            let stamps: Vec<_> = trace.events.iter().map(Event::timestamp).collect();
            if stamps.iter().all(Option::is_some) {
                for pair in stamps.windows(2) {
                    if pair[0] > pair[1] {
                        return Err(XesError::Invalid(format!(
                            "trace {ti}: events are not time-ordered"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn total_events(&self) -> usize {
        self.traces.iter().map(|t| t.events.len()).sum()
    }

    /// Sorted distinct values of the `label` attribute across all events.
    pub fn label_alphabet(&self) -> Result<Vec<String>, XesError> {
        let mut labels = BTreeSet::new();
        for trace in &self.traces {
            for label in trace.labels()? {
                labels.insert(label.to_string());
            }
        }
        Ok(labels.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn ts(s: &str) -> DateTime<FixedOffset> {
        DateTime::parse_from_rfc3339(s).unwrap()
    }

    #[test]
    fn get_absent_attribute_is_none() {
        let mut event = Event::new();
        event.set(CONCEPT_NAME, AttributeValue::String("Water".into()));
        assert_eq!(event.concept_name(), Some("Water"));
        assert_eq!(event.get("org:resource"), None);
    }

    #[test]
    fn label_lookup_matches_annotation() {
        let event = Event::from_attrs([
            (CONCEPT_NAME, AttributeValue::String("Medicine cabinet".into())),
            (
                TIME_TIMESTAMP,
                AttributeValue::timestamp(ts("2015-11-03T08:45:23.000+01:00")),
            ),
            (LABEL, AttributeValue::String("Taking medicine".into())),
        ]);
        assert_eq!(event.label(), Some("Taking medicine"));
    }

    #[test]
    fn set_overwrites_in_place() {
        let mut event = Event::new();
        event.set("a", AttributeValue::Int(1));
        event.set("b", AttributeValue::Int(2));
        event.set("a", AttributeValue::Int(3));
        let keys: Vec<_> = event.attributes().map(|(k, _)| k).collect();
        assert_eq!(keys, ["a", "b"]);
        assert_eq!(event.get("a"), Some(&AttributeValue::Int(3)));
    }

    #[test]
    fn missing_global_event_attribute_is_rejected() {
        let mut trace = Trace::new("c1");
        trace.events.push(Event::from_attrs([(
            CONCEPT_NAME,
            AttributeValue::String("S".into()),
        )]));
        let mut log = EventLog::new(vec![trace]);
        log.global_event_attributes.insert(TIME_TIMESTAMP.to_string());
        assert!(log.validate().is_err());
    }

    #[test]
    fn out_of_order_timestamps_are_rejected() {
        let base = FixedOffset::east_opt(3600).unwrap();
        let mut trace = Trace::new("c1");
        for secs in [10i64, 5] {
            trace.events.push(Event::from_attrs([(
                TIME_TIMESTAMP,
                AttributeValue::timestamp(
                    base.timestamp_millis_opt(secs * 1000).unwrap(),
                ),
            )]));
        }
        let log = EventLog::new(vec![trace]);
        assert!(log.validate().is_err());
    }

    #[test]
    fn timestamp_truncates_to_millis() {
        let fine = ts("2015-11-03T08:45:23.123456+01:00");
        let value = AttributeValue::timestamp(fine);
        assert_eq!(value.as_timestamp().unwrap().nanosecond(), 123_000_000);
    }
}
