//! FIFO pairing of lifecycle steps within a trace.
//!
//! Parallel instances of the same activity are resolved by assuming
//! consecutive lifecycle steps occur in the same order as the preceding
//! step: the first `complete` of a concept pairs with its earliest
//! unconsumed `start`, and so on along the transactional chain
//! schedule < start < suspend/resume < complete. Sensor-level logs only
//! exercise the start/complete pair.

use std::collections::{HashMap, VecDeque};

use chrono::{DateTime, FixedOffset};

use crate::xes::Trace;

/// One closed lifecycle step: the later event and the time since the
/// matching earlier step.
#[derive(Debug, Clone, PartialEq)]
pub struct LifecyclePair {
    pub concept_name: String,
    pub from_value: String,
    pub to_value: String,
    pub duration_seconds: f64,
    /// Index (within the trace) of the later, closing event.
    pub event_index: usize,
}

/// Pairing output plus a tally of steps whose predecessor was missing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LifecyclePairing {
    pub pairs: Vec<LifecyclePair>,
    pub unmatched: usize,
}

/// Preceding lifecycle value in the transactional order, and whether a
/// missing predecessor is anomalous. A `start` without a `schedule` is
/// normal (schedules are rarely logged); a `complete` without a `start`
/// is worth tallying.
fn preceding_value(value: &str) -> Option<(&'static str, bool)> {
    match value {
        "start" => Some(("schedule", false)),
        "suspend" => Some(("start", true)),
        "resume" => Some(("suspend", true)),
        "complete" => Some(("start", true)),
        _ => None,
    }
}

/// Pairs lifecycle steps per concept name with FIFO queues per lifecycle
/// value. Events lacking a concept, lifecycle or timestamp are skipped.
pub fn pair_lifecycles(trace: &Trace) -> LifecyclePairing {
    type Queue = VecDeque<(usize, DateTime<FixedOffset>)>;
    let mut queues: HashMap<(String, String), Queue> = HashMap::new();
    let mut result = LifecyclePairing::default();

    for (index, event) in trace.events.iter().enumerate() {
        let (Some(concept), Some(value), Some(ts)) =
            (event.concept_name(), event.lifecycle(), event.timestamp())
        else {
            continue;
        };
        if let Some((prev, required)) = preceding_value(value) {
            let key = (concept.to_string(), prev.to_string());
            match queues.get_mut(&key).and_then(Queue::pop_front) {
                Some((_, opened_at)) => {
                    let millis = (ts - opened_at).num_milliseconds();
                    result.pairs.push(LifecyclePair {
                        concept_name: concept.to_string(),
                        from_value: prev.to_string(),
                        to_value: value.to_string(),
                        duration_seconds: millis as f64 / 1000.0,
                        event_index: index,
                    });
                }
                None if required => result.unmatched += 1,
                None => {}
            }
        }
        queues
            .entry((concept.to_string(), value.to_string()))
            .or_default()
            .push_back((index, ts));
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xes::{
        AttributeValue, Event, Trace, CONCEPT_NAME, LIFECYCLE_TRANSITION, TIME_TIMESTAMP,
    };
    use chrono::{FixedOffset, TimeZone};

    fn lifecycle_event(concept: &str, value: &str, at_seconds: i64) -> Event {
        let tz = FixedOffset::east_opt(0).unwrap();
        Event::from_attrs([
            (CONCEPT_NAME, AttributeValue::String(concept.into())),
            (LIFECYCLE_TRANSITION, AttributeValue::String(value.into())),
            (
                TIME_TIMESTAMP,
                AttributeValue::timestamp(tz.timestamp_millis_opt(at_seconds * 1000).unwrap()),
            ),
        ])
    }

    fn trace_of(steps: &[(&str, &str, i64)]) -> Trace {
        let mut trace = Trace::new("t");
        trace.events = steps
            .iter()
            .map(|(c, v, s)| lifecycle_event(c, v, *s))
            .collect();
        trace
    }

    #[test]
    fn parallel_instances_pair_in_order() {
        let trace = trace_of(&[
            ("A", "start", 0),
            ("A", "start", 5),
            ("A", "complete", 7),
            ("A", "complete", 9),
        ]);
        let pairing = pair_lifecycles(&trace);
        let durations: Vec<f64> = pairing.pairs.iter().map(|p| p.duration_seconds).collect();
        assert_eq!(durations, [7.0, 4.0]);
        assert_eq!(pairing.unmatched, 0);
    }

    #[test]
    fn simple_pair() {
        let trace = trace_of(&[("A", "start", 0), ("A", "complete", 3)]);
        let pairing = pair_lifecycles(&trace);
        assert_eq!(pairing.pairs.len(), 1);
        assert_eq!(pairing.pairs[0].duration_seconds, 3.0);
        assert_eq!(pairing.pairs[0].event_index, 1);
    }

    #[test]
    fn unmatched_complete_is_tallied() {
        let trace = trace_of(&[("A", "complete", 3)]);
        let pairing = pair_lifecycles(&trace);
        assert!(pairing.pairs.is_empty());
        assert_eq!(pairing.unmatched, 1);
    }

    #[test]
    fn concepts_do_not_cross_pair() {
        let trace = trace_of(&[
            ("A", "start", 0),
            ("B", "start", 1),
            ("B", "complete", 2),
            ("A", "complete", 10),
        ]);
        let pairing = pair_lifecycles(&trace);
        let got: Vec<(&str, f64)> = pairing
            .pairs
            .iter()
            .map(|p| (p.concept_name.as_str(), p.duration_seconds))
            .collect();
        assert_eq!(got, [("B", 1.0), ("A", 10.0)]);
    }

    #[test]
    fn random_interleavings_match_fifo_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let len = rng.random_range(1..20);
            let steps: Vec<(&str, &str, i64)> = (0..len)
                .map(|i| {
                    let concept = if rng.random_bool(0.5) { "A" } else { "B" };
                    let value = if rng.random_bool(0.5) { "start" } else { "complete" };
                    (concept, value, i as i64)
                })
                .collect();
            let got = pair_lifecycles(&trace_of(&steps));

            // oracle: independent per-concept FIFO queues over starts
            let mut expected = Vec::new();
            let mut open: HashMap<&str, VecDeque<i64>> = HashMap::new();
            for (concept, value, at) in &steps {
                match *value {
                    "start" => open.entry(concept).or_default().push_back(*at),
                    "complete" => {
                        if let Some(since) = open.entry(concept).or_default().pop_front() {
                            expected.push((concept.to_string(), (*at - since) as f64));
                        }
                    }
                    _ => unreachable!(),
                }
            }
            let pairs: Vec<(String, f64)> = got
                .pairs
                .iter()
                .map(|p| (p.concept_name.clone(), p.duration_seconds))
                .collect();
            assert_eq!(pairs, expected);
            assert!(got.pairs.len() <= steps.len());
            assert!(got.pairs.iter().all(|p| p.duration_seconds >= 0.0));
        }
    }
}
