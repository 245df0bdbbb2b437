//! Modified Bessel functions of the first kind, orders zero and one.
//!
//! Power series below the crossover, asymptotic expansion above it. The
//! crossover at 25 keeps both branches comfortably inside their accurate
//! ranges; relative error is below 1e-12 for arguments up to 700.

use std::f64::consts::PI;

const CROSSOVER: f64 = 25.0;

/// I0(x) for x ≥ 0.
pub fn i0(x: f64) -> f64 {
    log_i0(x).exp()
}

/// ln I0(x) for x ≥ 0. Safe against overflow for large x.
pub fn log_i0(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < CROSSOVER {
        series_i0(x).ln()
    } else {
        // I0(x) ~ e^x / sqrt(2 pi x) * sum_k a_k, a_0 = 1,
        // a_k = a_{k-1} * (2k-1)^2 / (8 k x)
        x - 0.5 * (2.0 * PI * x).ln() + asymptotic_sum(x, 0).ln()
    }
}

/// ln I1(x) for x > 0.
fn log_i1(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x < CROSSOVER {
        series_i1(x).ln()
    } else {
        x - 0.5 * (2.0 * PI * x).ln() + asymptotic_sum(x, 1).ln()
    }
}

/// A(x) = I1(x) / I0(x), the mean resultant length of a von Mises
/// distribution with concentration x. Increasing from 0 toward 1.
pub fn bessel_ratio(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < 1e-8 {
        // A(x) = x/2 - x^3/16 + O(x^5)
        x / 2.0
    } else {
        (log_i1(x) - log_i0(x)).exp()
    }
}

fn series_i0(x: f64) -> f64 {
    // sum_k (x^2/4)^k / (k!)^2
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / ((k * k) as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn series_i1(x: f64) -> f64 {
    // (x/2) * sum_k (x^2/4)^k / (k! (k+1)!)
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / ((k * (k + 1)) as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum * x / 2.0
}

/// Truncated asymptotic series for I_nu; terms are added while they keep
/// shrinking, which is ample for x ≥ 25.
fn asymptotic_sum(x: f64, nu: u32) -> f64 {
    let mu = 4.0 * (nu * nu) as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut prev_abs = f64::INFINITY;
    for k in 1..30u32 {
        let odd = (2 * k - 1) as f64;
        term *= -(mu - odd * odd) / (8.0 * k as f64 * x);
        if term.abs() >= prev_abs {
            break; // divergent tail reached
        }
        prev_abs = term.abs();
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum
}
