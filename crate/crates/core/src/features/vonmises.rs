//! Von Mises mixture models over circular data.
//!
//! Fitting runs expectation-maximization per candidate component count and
//! selects the count by BIC. Concentrations are estimated by inverting
//! A(kappa) = I1(kappa)/I0(kappa) with a closed-form start and a few Newton
//! steps.

use std::f64::consts::TAU;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bessel::{bessel_ratio, log_i0};
use super::{bic, seed_centers, EmRuns, FeatureError, EM_MAX_ITERATIONS, EM_RESTARTS, EM_TOLERANCE};

/// Upper cap on fitted concentrations; keeps degenerate point masses finite.
pub const KAPPA_MAX: f64 = 700.0;

const LN_TAU: f64 = 1.837877066409345483560659472811_f64;

/// One von Mises component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VonMisesComponent {
    pub weight: f64,
    /// Mean direction in [0, 2π).
    pub mean: f64,
    /// Concentration, ≥ 0 (0 is the uniform circle).
    pub concentration: f64,
}

impl VonMisesComponent {
    fn log_density(&self, angle: f64) -> f64 {
        self.concentration * (angle - self.mean).cos() - LN_TAU - log_i0(self.concentration)
    }
}

/// A mixture of von Mises distributions on [0, 2π).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VonMisesMixture {
    pub components: Vec<VonMisesComponent>,
}

impl VonMisesMixture {
    /// Mixture density at the given angle; 2π-periodic and non-negative.
    pub fn density(&self, angle: f64) -> f64 {
        self.components
            .iter()
            .map(|c| {
                if c.weight > 0.0 {
                    (c.weight.ln() + c.log_density(angle)).exp()
                } else {
                    0.0
                }
            })
            .sum()
    }
}

/// Shortest arc between two angles, in [0, π].
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Solves A(kappa) = r for kappa in [0, KAPPA_MAX].
fn solve_concentration(r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    if r >= 1.0 - 1e-12 {
        return KAPPA_MAX;
    }
    // Banerjee-style closed form, then Newton refinement.
    let mut kappa = (r * (2.0 - r * r) / (1.0 - r * r)).clamp(0.0, KAPPA_MAX);
    for _ in 0..5 {
        let a = bessel_ratio(kappa);
        let da = if kappa < 1e-8 {
            0.5
        } else {
            1.0 - a * a - a / kappa
        };
        if da.abs() < 1e-300 {
            break;
        }
        kappa = (kappa - (a - r) / da).clamp(0.0, KAPPA_MAX);
    }
    kappa
}

struct EmState {
    weights: Vec<f64>,
    means: Vec<f64>,
    concentrations: Vec<f64>,
}

fn em_run(angles: &[f64], init_means: Vec<f64>, trajectory: &mut Vec<f64>) -> (EmState, f64) {
    let n = angles.len();
    let k = init_means.len();
    let mut state = EmState {
        weights: vec![1.0 / k as f64; k],
        means: init_means,
        concentrations: vec![1.0; k],
    };
    let mut resp = vec![0.0; n * k];
    let mut log_likelihood = f64::NEG_INFINITY;

    for iter in 0..EM_MAX_ITERATIONS {
        // E-step in log space
        let mut ll = 0.0;
        for (i, &angle) in angles.iter().enumerate() {
            let row = &mut resp[i * k..(i + 1) * k];
            for j in 0..k {
                row[j] = if state.weights[j] > 0.0 {
                    state.weights[j].ln()
                        + VonMisesComponent {
                            weight: state.weights[j],
                            mean: state.means[j],
                            concentration: state.concentrations[j],
                        }
                        .log_density(angle)
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

        // M-step
        for j in 0..k {
            let mut total = 0.0;
            let mut sin_sum = 0.0;
            let mut cos_sum = 0.0;
            for (i, &angle) in angles.iter().enumerate() {
                let r = resp[i * k + j];
                total += r;
                sin_sum += r * angle.sin();
                cos_sum += r * angle.cos();
            }
            state.weights[j] = total / n as f64;
            if total > 1e-12 {
                state.means[j] = sin_sum.atan2(cos_sum).rem_euclid(TAU);
                let resultant = (sin_sum * sin_sum + cos_sum * cos_sum).sqrt() / total;
                state.concentrations[j] = solve_concentration(resultant.min(1.0));
            }
        }
    }
    (state, log_likelihood)
}

/// Fits a von Mises mixture, selecting the component count by BIC.
///
/// Per candidate count, EM runs with several k-means++-style seedings on
/// circular distance and keeps the best likelihood. Empty input is an
/// error. Deterministic for a fixed seed.
pub fn fit_vmmm(
    angles: &[f64],
    max_components: usize,
    seed: u64,
) -> Result<VonMisesMixture, FeatureError> {
    fit_vmmm_detailed(angles, max_components, seed).map(|fit| fit.model)
}

/// Result of a mixture fit with the recorded EM trajectories.
#[derive(Debug, Clone)]
pub struct VmmmFit {
    pub model: VonMisesMixture,
    pub log_likelihood: f64,
    pub bic: f64,
    pub runs: EmRuns,
}

pub fn fit_vmmm_detailed(
    angles: &[f64],
    max_components: usize,
    seed: u64,
) -> Result<VmmmFit, FeatureError> {
    if angles.is_empty() {
        return Err(FeatureError::EmptyInput("fit_vmmm"));
    }
    if max_components == 0 {
        return Err(FeatureError::Config("max_components must be ≥ 1".into()));
    }
    let angles: Vec<f64> = angles.iter().map(|a| a.rem_euclid(TAU)).collect();
    let n = angles.len();
    let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
    let mut runs = EmRuns::default();
    let mut best: Option<(f64, f64, EmState)> = None; // (bic, ll, state)

    for k in 1..=max_components.min(n) {
        let mut best_of_restarts: Option<(f64, EmState)> = None;
        for _ in 0..EM_RESTARTS {
            let centers = seed_centers(&angles, k, &mut rng, circular_distance);
            let mut trajectory = Vec::new();
            let (state, ll) = em_run(&angles, centers, &mut trajectory);
            runs.trajectories.push(trajectory);
            // strict > keeps the earliest restart on ties
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
        .zip(&state.concentrations)
        .filter(|((w, _), _)| **w > 0.0)
        .map(|((&weight, &mean), &concentration)| VonMisesComponent {
            weight,
            mean,
            concentration,
        })
        .collect();
    Ok(VmmmFit {
        model: VonMisesMixture { components },
        log_likelihood,
        bic: score,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_component_density_is_one_over_tau() {
        let model = VonMisesMixture {
            components: vec![VonMisesComponent {
                weight: 1.0,
                mean: 1.0,
                concentration: 0.0,
            }],
        };
        for angle in [0.0, 1.0, 3.0, 6.0] {
            let d = model.density(angle);
            assert!((d - 1.0 / TAU).abs() < 1e-12, "density {d}");
        }
    }

    #[test]
    fn density_is_periodic() {
        let model = VonMisesMixture {
            components: vec![
                VonMisesComponent { weight: 0.3, mean: 0.7, concentration: 4.0 },
                VonMisesComponent { weight: 0.7, mean: 4.1, concentration: 0.5 },
            ],
        };
        for angle in [0.0, 0.9, 2.5, 5.9] {
            assert!((model.density(angle) - model.density(angle + TAU)).abs() < 1e-12);
        }
    }

    #[test]
    fn density_integrates_to_one() {
        let model = VonMisesMixture {
            components: vec![
                VonMisesComponent { weight: 0.5, mean: 1.0, concentration: 8.0 },
                VonMisesComponent { weight: 0.5, mean: 4.0, concentration: 2.0 },
            ],
        };
        let nodes = 10_000;
        let h = TAU / nodes as f64;
        let integral: f64 = (0..nodes)
            .map(|i| model.density((i as f64 + 0.5) * h) * h)
            .sum();
        assert!((integral - 1.0).abs() < 1e-3, "integral {integral}");
    }

    #[test]
    fn identical_angles_collapse_to_one_capped_component() {
        let angles = vec![1.25; 20];
        let model = fit_vmmm(&angles, 4, 7).unwrap();
        assert_eq!(model.components.len(), 1);
        let c = &model.components[0];
        assert!(circular_distance(c.mean, 1.25) < 1e-9);
        assert_eq!(c.concentration, KAPPA_MAX);
    }

    #[test]
    fn concentration_solver_inverts_bessel_ratio() {
        for kappa in [0.1, 0.5, 2.0, 8.0, 50.0, 400.0] {
            let r = bessel_ratio(kappa);
            let back = solve_concentration(r);
            assert!(
                (back - kappa).abs() / kappa < 1e-6,
                "kappa {kappa} -> r {r} -> {back}"
            );
        }
    }

    #[test]
    fn em_trajectories_never_decrease() {
        let angles: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).rem_euclid(TAU)).collect();
        let fit = fit_vmmm_detailed(&angles, 4, 11).unwrap();
        for trajectory in &fit.runs.trajectories {
            for pair in trajectory.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-9, "decrease: {pair:?}");
            }
        }
    }
}
