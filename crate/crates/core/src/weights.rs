//! Richardson-Romberg weights for the weighted multilevel estimator.
//!
//! With nodes `x_j = M^{-(j-1) alpha}`, `j = 1..R`, the weights solve
//!
//! ```text
//! sum_j w_j x_j^r = 1 if r = 0, 0 for r = 1..R-1
//! ```
//!
//! i.e. `w_j` is the Lagrange basis polynomial of node `x_j` evaluated at zero,
//! `w_j = prod_{i != j} x_i / (x_i - x_j)`. The product formula avoids forming
//! the (badly conditioned) Vandermonde matrix at all.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Deepest weight system we are willing to build.
pub const MAX_DEPTH: usize = 12;

/// Residual tolerance checked after every solve.
const RESIDUAL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub alpha: f64,
    pub m: u64,
    pub r: usize,
}

impl WeightSpec {
    pub fn new(alpha: f64, m: u64, r: usize) -> Result<Self> {
        let spec = Self { alpha, m, r };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return invalid(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.m < 2 {
            return invalid(format!("level root M must be >= 2, got {}", self.m));
        }
        if self.r == 0 {
            return invalid("depth R must be >= 1");
        }
        if self.r > MAX_DEPTH {
            return Err(Error::Refused(format!(
                "depth R = {} exceeds {MAX_DEPTH}; the weight system is too ill-conditioned",
                self.r
            )));
        }
        Ok(())
    }

    /// `x_j = n_j^{-alpha}` with `n_j = M^{j-1}`.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.r).map(|j| (self.m as f64).powf(-(j as f64) * self.alpha)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub spec: WeightSpec,
    /// `w_1, ..., w_R`
    pub w: Vec<f64>,
    /// Tail sums `W_j = w_j + ... + w_R`; `W_1 = 1`.
    pub cumulative: Vec<f64>,
    /// `w~_{R+1} = sum_i w_i n_i^{-alpha R}`.
    pub w_tilde: f64,
}

impl WeightVector {
    pub fn depth(&self) -> usize {
        self.w.len()
    }

    /// Multiplier of level `j` (1-based) in the weighted estimator.
    pub fn level_factor(&self, j: usize) -> f64 {
        self.cumulative[j - 1]
    }
}

pub fn solve_weights(spec: &WeightSpec) -> Result<WeightVector> {
    spec.validate()?;
    let x = spec.nodes();
    let r = spec.r;
    let w: Vec<f64> = (0..r)
        .map(|j| {
            (0..r)
                .filter(|&i| i != j)
                .map(|i| x[i] / (x[i] - x[j]))
                .product()
        })
        .collect();

    // Residuals of the moment conditions.
    let worst = (0..r)
        .map(|p| {
            let target = if p == 0 { 1.0 } else { 0.0 };
            let s: f64 = w.iter().zip(&x).map(|(wj, xj)| wj * xj.powi(p as i32)).sum();
            (s - target).abs()
        })
        .fold(0.0, f64::max);
    if !(worst <= RESIDUAL_TOLERANCE) {
        return Err(Error::Refused(format!(
            "weight system for (alpha={}, M={}, R={}) has residual {worst:e}",
            spec.alpha, spec.m, spec.r
        )));
    }

    let mut cumulative = vec![0.0; r];
    let mut tail = 0.0;
    for j in (0..r).rev() {
        tail += w[j];
        cumulative[j] = tail;
    }
    // The first condition makes this exactly one up to round-off; pin it.
    cumulative[0] = 1.0;

    let w_tilde = residual_from_nodes(&w, &x, r);
    Ok(WeightVector { spec: *spec, w, cumulative, w_tilde })
}

fn residual_from_nodes(w: &[f64], x: &[f64], r: usize) -> f64 {
    w.iter().zip(x).map(|(wj, xj)| wj * xj.powi(r as i32)).sum()
}

/// `w~_{R+1} = sum_i w_i M^{-(i-1) alpha R}`, the factor multiplying
/// `c_R h^{alpha R}` in the residual bias of the weighted estimator.
pub fn residual_bias_factor(wv: &WeightVector, spec: &WeightSpec) -> Result<f64> {
    spec.validate()?;
    if wv.depth() != spec.r {
        return invalid(format!(
            "weight vector has depth {} but spec has R = {}",
            wv.depth(),
            spec.r
        ));
    }
    Ok(residual_from_nodes(&wv.w, &spec.nodes(), spec.r))
}
