//! Independent oracles shared by the integration suites.
//!
//! Everything here recomputes expected values from first principles
//! (definitions, exhaustive enumeration, generative sampling) without
//! touching the inference paths under test.

use std::f64::consts::{PI, TAU};

use evabs::crf::CrfModel;
use evabs::features::FeatureVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Score of one label path straight from the documented weight layout:
/// an observation block `feature * L + label` followed by a transition
/// block `K*L + previous * L + label` with `previous == L` as the start
/// symbol.
pub fn oracle_path_score(model: &CrfModel, features: &[FeatureVector], path: &[usize]) -> f64 {
    let l = model.labels.len();
    let k = model.observation_feature_count;
    let obs = |feature: usize, label: usize| model.weights[feature * l + label];
    let trans = |prev: usize, label: usize| model.weights[k * l + prev * l + label];

    let mut score = 0.0;
    for (t, vector) in features.iter().enumerate() {
        for (feature, &x) in vector.values().iter().enumerate() {
            score += obs(feature, path[t]) * x;
        }
        let prev = if t == 0 { l } else { path[t - 1] };
        score += trans(prev, path[t]);
    }
    score
}

/// Every label sequence of the given length.
pub fn all_paths(t_len: usize, label_count: usize) -> Vec<Vec<usize>> {
    let mut paths: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..t_len {
        paths = paths
            .into_iter()
            .flat_map(|p| {
                (0..label_count).map(move |j| {
                    let mut q = p.clone();
                    q.push(j);
                    q
                })
            })
            .collect();
    }
    paths
}

pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Plain recursive optimal-string-alignment distance, memoized.
pub fn osa_oracle<T: Eq>(a: &[T], b: &[T]) -> usize {
    fn go<T: Eq>(a: &[T], b: &[T], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
        if i == 0 {
            return j;
        }
        if j == 0 {
            return i;
        }
        if let Some(v) = memo[i][j] {
            return v;
        }
        let cost = usize::from(a[i - 1] != b[j - 1]);
        let mut best = go(a, b, i - 1, j, memo) + 1;
        best = best.min(go(a, b, i, j - 1, memo) + 1);
        best = best.min(go(a, b, i - 1, j - 1, memo) + cost);
        if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
            best = best.min(go(a, b, i - 2, j - 2, memo) + 1);
        }
        memo[i][j] = Some(best);
        best
    }
    let mut memo = vec![vec![None; b.len() + 1]; a.len() + 1];
    go(a, b, a.len(), b.len(), &mut memo)
}

/// Draws one von Mises sample by the Best-Fisher rejection method.
pub fn sample_von_mises(rng: &mut ChaCha8Rng, mean: f64, kappa: f64) -> f64 {
    if kappa < 1e-8 {
        return rng.random::<f64>() * TAU;
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let u3: f64 = rng.random();
            let sign = if u3 > 0.5 { 1.0 } else { -1.0 };
            return (mean + sign * f.acos()).rem_euclid(TAU);
        }
    }
}

/// Shortest arc between two angles.
pub fn circular_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}
