//! Scratch probe for end-to-end cross-validation quality (not shipped).

use evabs::abstraction::FeatureConfig;
use evabs::crf::TrainConfig;
use evabs::evaluation::loto_cv;
use evabs::features::Period;
use evabs::petri::{motivating_example, simulate, StopPolicy};
use evabs::xes::CONCEPT_NAME;

fn main() {
    let model = motivating_example();
    for seed in [7u64, 42, 2015] {
        for stop_p in [0.4, 0.5, 0.6] {
            for l1 in [0.01, 0.05, 0.1] {
                let policy = StopPolicy {
                    final_marking_stop_probability: stop_p,
                    ..StopPolicy::default()
                };
                let log = simulate(&model, 30, seed, &policy).unwrap();
                let features = FeatureConfig {
                    ngrams: vec![(CONCEPT_NAME.to_string(), 2)],
                    periods: vec![Period::Day],
                    lifecycle_values: vec![],
                    max_components: 8,
                };
                let train = TrainConfig {
                    l1_strength: l1,
                    seed,
                    ..TrainConfig::default()
                };
                let start = std::time::Instant::now();
                let report = loto_cv(&log, &features, &train).unwrap();
                let events: usize = log.traces.iter().map(|t| t.events.len()).sum();
                println!(
                    "seed={seed} stop_p={stop_p} l1={l1} events={events} mean_dls={:.4} time={:.1}s",
                    report.mean_dls,
                    start.elapsed().as_secs_f64()
                );
            }
        }
    }
}
