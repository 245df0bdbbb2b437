//! Linear-chain conditional random field.
//!
//! Observation features are conjoined with the current label and a dense
//! transition matrix (including a boundary start symbol) covers label
//! pairs. Inference is exact: forward-backward in log space for the
//! partition function and marginals, Viterbi for decoding. Training
//! minimizes the negative conditional log-likelihood plus an L1 penalty
//! with a monotone accelerated proximal-gradient scheme, so converged
//! weights contain exact zeros.

use ndarray::{Array2, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureVector;

#[derive(Debug, Error)]
pub enum CrfError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("label index {index} out of range for {count} labels")]
    LabelOutOfRange { index: usize, count: usize },
    #[error("non-finite objective at iteration {iteration}")]
    NonFinite { iteration: usize },
}

/// Weight layout: one block conjoining each observation feature with the
/// current label, then one transition block over (previous label or start
/// symbol, current label).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfModel {
    pub labels: Vec<String>,
    pub observation_feature_count: usize,
    #[serde(with = "weights_serde")]
    pub weights: Vec<f64>,
}

/// Weights are stored as decimal text with 17 significant digits, which
/// round-trips every f64 exactly.
mod weights_serde {
    use serde::de::{Deserializer, Error};
    use serde::ser::Serializer;
    use serde::{Deserialize, Serialize};

    pub fn serialize<S: Serializer>(weights: &[f64], serializer: S) -> Result<S::Ok, S::Error> {
        weights
            .iter()
            .map(|w| format!("{w:.16e}"))
            .collect::<Vec<_>>()
            .serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<f64>, D::Error> {
        Vec::<String>::deserialize(deserializer)?
            .into_iter()
            .map(|s| s.parse::<f64>().map_err(D::Error::custom))
            .collect()
    }
}

impl CrfModel {
    /// A model with all-zero weights.
    pub fn zeroed(labels: Vec<String>, observation_feature_count: usize) -> Self {
        let label_count = labels.len();
        let len = observation_feature_count * label_count + (label_count + 1) * label_count;
        CrfModel {
            labels,
            observation_feature_count,
            weights: vec![0.0; len],
        }
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    fn obs_index(&self, feature: usize, label: usize) -> usize {
        feature * self.label_count() + label
    }

    /// `previous == label_count()` addresses the start symbol.
    fn trans_index(&self, previous: usize, label: usize) -> usize {
        self.observation_feature_count * self.label_count()
            + previous * self.label_count()
            + label
    }

    pub fn nonzero_weights(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }

    fn check_features(&self, features: &[FeatureVector]) -> Result<(), CrfError> {
        for (t, vector) in features.iter().enumerate() {
            if vector.len() != self.observation_feature_count {
                return Err(CrfError::Dimension(format!(
                    "position {t}: feature vector has length {}, model expects {}",
                    vector.len(),
                    self.observation_feature_count
                )));
            }
        }
        Ok(())
    }
}

/// One training sequence: per-event features and gold label indices.
#[derive(Debug, Clone)]
pub struct CrfInstance {
    pub features: Vec<FeatureVector>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub l1_strength: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l1_strength: 0.1,
            max_iterations: 1000,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

/// Training result: the model plus diagnostics of the optimizer run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: CrfModel,
    pub final_objective: f64,
    pub iterations: usize,
    pub nonzero_weights: usize,
}

/// Per-position score tensor: entry (t, i, j) sums the observation-feature
/// weights for label j at position t with the transition weight i→j. All
/// rows of position 0 use the start symbol as predecessor.
pub fn log_potentials(
    features: &[FeatureVector],
    model: &CrfModel,
) -> Result<Array3<f64>, CrfError> {
    model.check_features(features)?;
    let t_len = features.len();
    let l = model.label_count();
    let mut potentials = Array3::zeros((t_len, l, l));
    for (t, vector) in features.iter().enumerate() {
        for j in 0..l {
            let mut obs = 0.0;
            for (k, &x) in vector.values().iter().enumerate() {
                obs += model.weights[model.obs_index(k, j)] * x;
            }
            if t == 0 {
                let score = obs + model.weights[model.trans_index(l, j)];
                for i in 0..l {
                    potentials[(0, i, j)] = score;
                }
            } else {
                for i in 0..l {
                    potentials[(t, i, j)] = obs + model.weights[model.trans_index(i, j)];
                }
            }
        }
    }
    Ok(potentials)
}

fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Exact inference results for one sequence.
#[derive(Debug, Clone)]
pub struct ForwardBackward {
    /// Log partition function from the forward recursion.
    pub log_z: f64,
    /// Log partition function from the backward recursion; equal to
    /// `log_z` up to rounding.
    pub log_z_backward: f64,
    /// (T × L) posterior label probabilities.
    pub label_marginals: Array2<f64>,
    /// (T × L × L) posterior transition probabilities; row t covers the
    /// step from position t-1 to t, so index 0 is unused (all zero).
    pub transition_marginals: Array3<f64>,
}

pub fn forward_backward(potentials: &Array3<f64>) -> ForwardBackward {
    let (t_len, l, _) = potentials.dim();
    assert!(t_len >= 1, "forward_backward requires T >= 1");

    let mut alpha = Array2::zeros((t_len, l));
    for j in 0..l {
        alpha[(0, j)] = potentials[(0, 0, j)];
    }
    let mut scratch = vec![0.0; l];
    for t in 1..t_len {
        for j in 0..l {
            for i in 0..l {
                scratch[i] = alpha[(t - 1, i)] + potentials[(t, i, j)];
            }
            alpha[(t, j)] = logsumexp(&scratch);
        }
    }
    let log_z = logsumexp(alpha.row(t_len - 1).as_slice().expect("contiguous"));

    let mut beta = Array2::zeros((t_len, l));
    for t in (0..t_len.saturating_sub(1)).rev() {
        for i in 0..l {
            for j in 0..l {
                scratch[j] = potentials[(t + 1, i, j)] + beta[(t + 1, j)];
            }
            beta[(t, i)] = logsumexp(&scratch);
        }
    }
    for j in 0..l {
        scratch[j] = potentials[(0, 0, j)] + beta[(0, j)];
    }
    let log_z_backward = logsumexp(&scratch);

    let mut label_marginals = Array2::zeros((t_len, l));
    for t in 0..t_len {
        for j in 0..l {
            label_marginals[(t, j)] = (alpha[(t, j)] + beta[(t, j)] - log_z).exp();
        }
    }
    let mut transition_marginals = Array3::zeros((t_len, l, l));
    for t in 1..t_len {
        for i in 0..l {
            for j in 0..l {
                transition_marginals[(t, i, j)] =
                    (alpha[(t - 1, i)] + potentials[(t, i, j)] + beta[(t, j)] - log_z).exp();
            }
        }
    }

    ForwardBackward {
        log_z,
        log_z_backward,
        label_marginals,
        transition_marginals,
    }
}

/// Most probable label sequence; ties resolve to the lowest label index.
pub fn viterbi(model: &CrfModel, features: &[FeatureVector]) -> Result<Vec<usize>, CrfError> {
    if features.is_empty() {
        return Ok(Vec::new());
    }
    let potentials = log_potentials(features, model)?;
    let (t_len, l, _) = potentials.dim();

    let mut score = Array2::from_elem((t_len, l), f64::NEG_INFINITY);
    let mut backpointer = Array2::zeros((t_len, l));
    for j in 0..l {
        score[(0, j)] = potentials[(0, 0, j)];
    }
    for t in 1..t_len {
        for j in 0..l {
            let mut best = f64::NEG_INFINITY;
            let mut best_i = 0usize;
            for i in 0..l {
                let s = score[(t - 1, i)] + potentials[(t, i, j)];
                if s > best {
                    best = s;
                    best_i = i;
                }
            }
            score[(t, j)] = best;
            backpointer[(t, j)] = best_i;
        }
    }

    let mut best_j = 0usize;
    let mut best = f64::NEG_INFINITY;
    for j in 0..l {
        if score[(t_len - 1, j)] > best {
            best = score[(t_len - 1, j)];
            best_j = j;
        }
    }
    let mut path = vec![best_j; t_len];
    for t in (1..t_len).rev() {
        path[t - 1] = backpointer[(t, path[t])];
    }
    Ok(path)
}

fn gold_score(potentials: &Array3<f64>, labels: &[usize]) -> f64 {
    let mut score = potentials[(0, 0, labels[0])];
    for t in 1..labels.len() {
        score += potentials[(t, labels[t - 1], labels[t])];
    }
    score
}

fn instance_nll_and_gradient(
    model: &CrfModel,
    instance: &CrfInstance,
) -> Result<(f64, Vec<f64>), CrfError> {
    if instance.features.len() != instance.labels.len() {
        return Err(CrfError::Dimension(format!(
            "{} feature vectors vs {} labels",
            instance.features.len(),
            instance.labels.len()
        )));
    }
    let l = model.label_count();
    for &y in &instance.labels {
        if y >= l {
            return Err(CrfError::LabelOutOfRange { index: y, count: l });
        }
    }

    let potentials = log_potentials(&instance.features, model)?;
    let fb = forward_backward(&potentials);
    let objective = fb.log_z - gold_score(&potentials, &instance.labels);

    let mut gradient = vec![0.0; model.weights.len()];
    for (t, vector) in instance.features.iter().enumerate() {
        let gold = instance.labels[t];
        for j in 0..l {
            let p = fb.label_marginals[(t, j)];
            for (k, &x) in vector.values().iter().enumerate() {
                gradient[model.obs_index(k, j)] += p * x;
            }
        }
        for (k, &x) in vector.values().iter().enumerate() {
            gradient[model.obs_index(k, gold)] -= x;
        }
        if t == 0 {
            for j in 0..l {
                gradient[model.trans_index(l, j)] += fb.label_marginals[(0, j)];
            }
            gradient[model.trans_index(l, gold)] -= 1.0;
        } else {
            for i in 0..l {
                for j in 0..l {
                    gradient[model.trans_index(i, j)] += fb.transition_marginals[(t, i, j)];
                }
            }
            gradient[model.trans_index(instance.labels[t - 1], gold)] -= 1.0;
        }
    }
    Ok((objective, gradient))
}

/// Negative conditional log-likelihood and its gradient over a dataset.
///
/// The gradient is expected feature counts under the model minus empirical
/// counts. The L1 penalty is not part of this smooth objective. Traces are
/// evaluated in parallel and reduced in dataset order, so the result is
/// deterministic.
pub fn nll_and_gradient(
    model: &CrfModel,
    dataset: &[CrfInstance],
) -> Result<(f64, Vec<f64>), CrfError> {
    if dataset.is_empty() {
        return Err(CrfError::EmptyDataset);
    }
    let per_trace: Vec<Result<(f64, Vec<f64>), CrfError>> = dataset
        .par_iter()
        .map(|instance| instance_nll_and_gradient(model, instance))
        .collect();

    let mut objective = 0.0;
    let mut gradient = vec![0.0; model.weights.len()];
    for result in per_trace {
        let (obj, grad) = result?;
        objective += obj;
        for (g, d) in gradient.iter_mut().zip(grad) {
            *g += d;
        }
    }
    Ok((objective, gradient))
}

fn nll_value(model: &CrfModel, dataset: &[CrfInstance]) -> Result<f64, CrfError> {
    let per_trace: Vec<Result<f64, CrfError>> = dataset
        .par_iter()
        .map(|instance| {
            let potentials = log_potentials(&instance.features, model)?;
            let fb = forward_backward(&potentials);
            Ok(fb.log_z - gold_score(&potentials, &instance.labels))
        })
        .collect();
    let mut total = 0.0;
    for value in per_trace {
        total += value?;
    }
    Ok(total)
}

fn soft_threshold(value: f64, threshold: f64) -> f64 {
    if value > threshold {
        value - threshold
    } else if value < -threshold {
        value + threshold
    } else {
        0.0
    }
}

fn l1_norm(weights: &[f64]) -> f64 {
    weights.iter().map(|w| w.abs()).sum()
}

/// Trains by minimizing nll + l1_strength·‖λ‖₁.
///
/// Accelerated proximal gradient with backtracking and a monotone
/// restart: momentum steps that would increase the objective are discarded
/// and acceleration restarts from the last accepted point. The proximal
/// step is a soft threshold, so weights driven to zero are exactly zero.
/// Initialization is the zero vector and the procedure uses no randomness;
/// two runs over the same dataset are bit-identical.
pub fn train(dataset: &[CrfInstance], model: CrfModel, config: &TrainConfig) -> Result<TrainOutcome, CrfError> {
    if dataset.is_empty() {
        return Err(CrfError::EmptyDataset);
    }
    let c = config.l1_strength;
    let dim = model.weights.len();
    let mut model = model;
    model.weights = vec![0.0; dim];

    let mut x_prev = vec![0.0; dim];
    let mut y = vec![0.0; dim];
    let mut objective_prev = {
        model.weights.copy_from_slice(&x_prev);
        nll_value(&model, dataset)? + c * l1_norm(&x_prev)
    };
    if !objective_prev.is_finite() {
        return Err(CrfError::NonFinite { iteration: 0 });
    }
    let mut momentum = 1.0f64;
    let mut step = 1.0f64;
    let mut iterations = 0;

    for iteration in 0..config.max_iterations {
        iterations = iteration + 1;
        model.weights.copy_from_slice(&y);
        let (f_y, grad_y) = nll_and_gradient(&model, dataset)?;
        if !f_y.is_finite() || grad_y.iter().any(|g| !g.is_finite()) {
            return Err(CrfError::NonFinite { iteration });
        }

        // backtracking proximal step from y
        let mut z = vec![0.0; dim];
        let mut f_z;
        loop {
            for i in 0..dim {
                z[i] = soft_threshold(y[i] - step * grad_y[i], step * c);
            }
            model.weights.copy_from_slice(&z);
            f_z = nll_value(&model, dataset)?;
            let mut linearized = f_y;
            let mut sq_dist = 0.0;
            for i in 0..dim {
                let d = z[i] - y[i];
                linearized += grad_y[i] * d;
                sq_dist += d * d;
            }
            if f_z <= linearized + sq_dist / (2.0 * step) + 1e-12 || step < 1e-18 {
                break;
            }
            step *= 0.5;
        }
        if !f_z.is_finite() {
            return Err(CrfError::NonFinite { iteration });
        }
        let objective_z = f_z + c * l1_norm(&z);

        if objective_z <= objective_prev {
            // accepted: advance with momentum
            let momentum_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            for i in 0..dim {
                let x_new = z[i];
                y[i] = x_new + (momentum - 1.0) / momentum_next * (x_new - x_prev[i]);
            }
            let gain = objective_prev - objective_z;
            x_prev.copy_from_slice(&z);
            objective_prev = objective_z;
            momentum = momentum_next;
            if gain < config.tolerance {
                break;
            }
        } else {
            // momentum overshot: restart acceleration from the last accepted point
            momentum = 1.0;
            y.copy_from_slice(&x_prev);
        }
    }

    model.weights.copy_from_slice(&x_prev);
    let nonzero_weights = model.nonzero_weights();
    Ok(TrainOutcome {
        model,
        final_objective: objective_prev,
        iterations,
        nonzero_weights,
    })
}
