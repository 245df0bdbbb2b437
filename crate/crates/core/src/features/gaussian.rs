//! Gaussian mixture models over non-negative durations.
//!
//! Same EM skeleton as the von Mises fit: per-count EM with restarts and
//! BIC selection. Standard deviations are floored to keep components
//! non-singular when all assigned durations coincide.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bic, seed_centers, EmRuns, FeatureError, EM_MAX_ITERATIONS, EM_RESTARTS, EM_TOLERANCE};

/// Lower bound on fitted standard deviations, in seconds.
pub const STDDEV_FLOOR: f64 = 1e-3;

const LN_TAU: f64 = 1.837877066409345483560659472811_f64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    /// Mean in seconds.
    pub mean: f64,
    /// Standard deviation in seconds, ≥ STDDEV_FLOOR.
    pub stddev: f64,
}

impl GaussianComponent {
    fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.stddev;
        -self.stddev.ln() - 0.5 * LN_TAU - 0.5 * z * z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub components: Vec<GaussianComponent>,
}

impl GaussianMixture {
    pub fn density(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| {
                if c.weight > 0.0 {
                    (c.weight.ln() + c.log_density(x)).exp()
                } else {
                    0.0
                }
            })
            .sum()
    }
}

struct EmState {
    weights: Vec<f64>,
    means: Vec<f64>,
    stddevs: Vec<f64>,
}

fn em_run(values: &[f64], init_means: Vec<f64>, trajectory: &mut Vec<f64>) -> (EmState, f64) {
    let n = values.len();
    let k = init_means.len();
    let spread = sample_stddev(values).max(STDDEV_FLOOR);
    let mut state = EmState {
        weights: vec![1.0 / k as f64; k],
        means: init_means,
        stddevs: vec![spread; k],
    };
    let mut resp = vec![0.0; n * k];
    let mut log_likelihood = f64::NEG_INFINITY;

    for iter in 0..EM_MAX_ITERATIONS {
        let mut ll = 0.0;
        for (i, &x) in values.iter().enumerate() {
            let row = &mut resp[i * k..(i + 1) * k];
            for j in 0..k {
                row[j] = if state.weights[j] > 0.0 {
                    state.weights[j].ln()
                        + GaussianComponent {
                            weight: state.weights[j],
                            mean: state.means[j],
                            stddev: state.stddevs[j],
                        }
                        .log_density(x)
                } else {
                    f64::NEG_INFINITY
                };
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_norm = max + sum.ln();
            ll += log_norm;
            for v in row.iter_mut() {
                *v = (*v - log_norm).exp();
            }
        }
        trajectory.push(ll);
        if iter > 0 && ll - log_likelihood < EM_TOLERANCE {
            log_likelihood = ll;
            break;
        }
        log_likelihood = ll;

        for j in 0..k {
            let mut total = 0.0;
            let mut mean_sum = 0.0;
            for (i, &x) in values.iter().enumerate() {
                let r = resp[i * k + j];
                total += r;
                mean_sum += r * x;
            }
            state.weights[j] = total / n as f64;
            if total > 1e-12 {
                let mean = mean_sum / total;
                let mut var_sum = 0.0;
                for (i, &x) in values.iter().enumerate() {
                    var_sum += resp[i * k + j] * (x - mean) * (x - mean);
                }
                state.means[j] = mean;
                state.stddevs[j] = (var_sum / total).sqrt().max(STDDEV_FLOOR);
            }
        }
    }
    (state, log_likelihood)
}

fn sample_stddev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Fits a Gaussian mixture, selecting the component count by BIC.
pub fn fit_gmm(
    durations: &[f64],
    max_components: usize,
    seed: u64,
) -> Result<GaussianMixture, FeatureError> {
    fit_gmm_detailed(durations, max_components, seed).map(|fit| fit.model)
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GaussianMixture,
    pub log_likelihood: f64,
    pub bic: f64,
    pub runs: EmRuns,
}

pub fn fit_gmm_detailed(
    durations: &[f64],
    max_components: usize,
    seed: u64,
) -> Result<GmmFit, FeatureError> {
    if durations.is_empty() {
        return Err(FeatureError::EmptyInput("fit_gmm"));
    }
    if max_components == 0 {
        return Err(FeatureError::Config("max_components must be ≥ 1".into()));
    }
    let n = durations.len();
    let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
    let mut runs = EmRuns::default();
    let mut best: Option<(f64, f64, EmState)> = None;

    for k in 1..=max_components.min(n) {
        let mut best_of_restarts: Option<(f64, EmState)> = None;
        for _ in 0..EM_RESTARTS {
            let centers = seed_centers(durations, k, &mut rng, |a, b| (a - b).abs());
            let mut trajectory = Vec::new();
            let (state, ll) = em_run(durations, centers, &mut trajectory);
            runs.trajectories.push(trajectory);
            if best_of_restarts.as_ref().map_or(true, |(b, _)| ll > *b) {
                best_of_restarts = Some((ll, state));
            }
        }
        let (ll, state) = best_of_restarts.expect("at least one restart");
        let p = 3 * k - 1;
        let score = bic(ll, p, n);
        if best.as_ref().map_or(true, |(b, _, _)| score < *b) {
            best = Some((score, ll, state));
        }
    }

    let (score, log_likelihood, state) = best.expect("at least one component count");
    let components = state
        .weights
        .iter()
        .zip(&state.means)
        .zip(&state.stddevs)
        .filter(|((w, _), _)| **w > 0.0)
        .map(|((&weight, &mean), &stddev)| GaussianComponent { weight, mean, stddev })
        .collect();
    Ok(GmmFit {
        model: GaussianMixture { components },
        log_likelihood,
        bic: score,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_durations_give_single_floored_component() {
        let model = fit_gmm(&[42.0; 15], 4, 3).unwrap();
        assert_eq!(model.components.len(), 1);
        assert!((model.components[0].mean - 42.0).abs() < 1e-9);
        assert_eq!(model.components[0].stddev, STDDEV_FLOOR);
    }

    #[test]
    fn weights_sum_to_one() {
        let values: Vec<f64> = (0..50).map(|i| (i % 7) as f64 * 3.0 + 10.0).collect();
        let model = fit_gmm(&values, 5, 9).unwrap();
        let total: f64 = model.components.iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn em_trajectories_never_decrease() {
        let values: Vec<f64> = (0..40)
            .map(|i| if i % 2 == 0 { 10.0 + i as f64 * 0.01 } else { 600.0 - i as f64 * 0.02 })
            .collect();
        let fit = fit_gmm_detailed(&values, 3, 5).unwrap();
        for trajectory in &fit.runs.trajectories {
            for pair in trajectory.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-9, "decrease: {pair:?}");
            }
        }
    }
}
