//! Dawson's integral `D(x) = exp(-x²) ∫₀ˣ exp(t²) dt`.
//!
//! A Maclaurin series covers |x| < 0.5. Elsewhere Rybicki's sampling
//! theorem expansion is used with step 0.2, whose aliasing error is below
//! 1e-26, truncated once the Gaussian weights fall under 1e-21.

use std::f64::consts::PI;

const STEP: f64 = 0.2;
const TERMS: usize = 17;
const SERIES_LIMIT: f64 = 0.5;

pub fn dawson(x: f64) -> f64 {
    let ax = x.abs();
    if ax < SERIES_LIMIT {
        return series(x);
    }
    let n0 = 2.0 * (0.5 * ax / STEP).round();
    let xp = ax - n0 * STEP;
    let mut e1 = (2.0 * xp * STEP).exp();
    let e2 = e1 * e1;
    let mut d1 = n0 + 1.0;
    let mut d2 = d1 - 2.0;
    let mut sum = 0.0;
    for i in 0..TERMS {
        let c = (-(((2 * i + 1) as f64) * STEP).powi(2)).exp();
        sum += c * (e1 / d1 + 1.0 / (d2 * e1));
        d1 += 2.0;
        d2 -= 2.0;
        e1 *= e2;
    }
    x.signum() * (-xp * xp).exp() * sum / PI.sqrt()
}

/// `Σ (-1)^n 2^n x^(2n+1) / (2n+1)!!`
fn series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for n in 1..40 {
        term *= -2.0 * x2 / (2 * n + 1) as f64;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}
