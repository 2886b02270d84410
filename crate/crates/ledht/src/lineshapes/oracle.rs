//! Independent principal-value quadrature for `(1/π) p.v. ∫ f(x') / (x - x') dx'`.
//!
//! Folding the integral about `x` cancels the singular part exactly:
//! `∫₀^R (f(x - u) - f(x + u)) / u du`, whose integrand is bounded near 0.
//! The remainder `u > R` is mapped onto `(0, 1]` by `u = R / t`, giving
//! `∫₀¹ (f(x - R/t) - f(x + R/t)) / t dt`, so slowly decaying partners such as
//! the Dawson and dispersive shapes are covered without truncation.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::quad::{integrate, QuadOptions};
use super::Grid;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct OracleOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
    pub initial_pieces: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-11,
            rel_tol: 1e-13,
            max_intervals: 20_000,
            initial_pieces: 64,
        }
    }
}

impl OracleOptions {
    fn quad(&self) -> QuadOptions {
        QuadOptions {
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            max_intervals: self.max_intervals,
            initial_pieces: self.initial_pieces,
        }
    }
}

/// Hilbert transform of `f` at a single point with near-field radius `radius`.
pub fn hilbert_oracle_at<F>(f: &F, x: f64, radius: f64, opts: &OracleOptions) -> Result<f64>
where
    F: Fn(f64) -> f64 + ?Sized,
{
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "support radius must be positive, got {radius}"
        )));
    }
    let q = opts.quad();
    let fail = |e: super::quad::NotConverged| Error::OracleFailure {
        x,
        achieved: e.error,
        requested: opts.abs_tol,
    };
    let near = integrate(|u| (f(x - u) - f(x + u)) / u, 0.0, radius, &q).map_err(fail)?;
    let far = integrate(
        |t| {
            let u = radius / t;
            let d = f(x - u) - f(x + u);
            if d == 0.0 {
                0.0
            } else {
                d / t
            }
        },
        0.0,
        1.0,
        &q,
    )
    .map_err(fail)?;
    Ok((near.value + far.value) / PI)
}

/// Evaluates the oracle at every grid point in parallel.
pub fn hilbert_oracle<F>(f: F, grid: &Grid, support_radius: f64, opts: &OracleOptions) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64 + Sync,
{
    (0..grid.len)
        .into_par_iter()
        .map(|i| hilbert_oracle_at(&f, grid.point(i), support_radius, opts))
        .collect()
}
