//! Parameter choice `(R, N, q)` for a target RMSE, and the asymptotic cost curve.
//!
//! The RMSE budget is split evenly: squared bias `<= eps^2 / 2` fixes the depth,
//! variance `<= eps^2 / 2` fixes the sample budget. Level shares follow the
//! effort-minimising rule `q_j ∝ |W_j| sqrt(V_j / c_j)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimator::{level_cost, sample_level, Allocation, CouplingMode, EstimatorKind, LevelGeometry};
use crate::exec::Executor;
use crate::model::{InnerProblem, NestedModel, StreamKey};
use crate::weights::{solve_weights, WeightSpec, WeightVector, MAX_DEPTH};

/// Deepest unweighted telescope considered.
const MAX_MLMC_DEPTH: usize = 40;

/// Level variances from a short pilot run on levels `1..=len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotStats {
    pub k0: u64,
    pub m: u64,
    pub n: u64,
    pub coupling: CouplingMode,
    /// `Var(f(X_{h_1}))`, then `Var` of each level difference.
    pub variances: Vec<f64>,
    pub means: Vec<f64>,
}

pub fn run_pilot<P: InnerProblem>(
    model: &NestedModel<P>,
    geometry: &LevelGeometry,
    mode: CouplingMode,
    n: u64,
    key: StreamKey,
    exec: &Executor,
) -> Result<PilotStats> {
    geometry.validate()?;
    if n < 2 {
        return invalid("pilot needs n >= 2 samples per level");
    }
    let mut variances = Vec::with_capacity(geometry.r);
    let mut means = Vec::with_capacity(geometry.r);
    for j in 1..=geometry.r {
        let acc = sample_level(model, geometry, j, mode, n, key.child(j as u64), exec)?;
        variances.push(acc.variance());
        means.push(acc.mean());
    }
    Ok(PilotStats { k0: geometry.k0, m: geometry.m, n, coupling: mode, variances, means })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationInput {
    pub epsilon: f64,
    pub alpha: f64,
    pub c1: f64,
    /// Strong order, used to extrapolate level variances past the pilot.
    pub beta: f64,
    /// Strong constant, used when the pilot has no level-difference data.
    #[serde(default)]
    pub v1: Option<f64>,
    pub m: u64,
    pub k0: u64,
    pub family: EstimatorKind,
    #[serde(default)]
    pub pilot: Option<PilotStats>,
    /// Override for `lim |c_R|^{1/R}`; defaults to `|c1|`.
    #[serde(default)]
    pub c_inf: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPlan {
    pub family: EstimatorKind,
    pub epsilon: f64,
    pub geometry: LevelGeometry,
    pub allocation: Allocation,
    pub weights: Option<WeightVector>,
    /// Level variances the allocation was built from.
    pub level_variances: Vec<f64>,
    pub predicted_cost: f64,
    pub predicted_bias: f64,
    pub predicted_stat_error: f64,
}

impl CalibrationInput {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return invalid(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return invalid(format!("alpha must be positive, got {}", self.alpha));
        }
        if !self.c1.is_finite() {
            return invalid("c1 must be finite");
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return invalid(format!("beta must be positive, got {}", self.beta));
        }
        if let Some(c) = self.c_inf {
            if !(c.is_finite() && c >= 0.0) {
                return invalid(format!("c_inf must be non-negative, got {c}"));
            }
        }
        LevelGeometry::new(self.k0, self.m, 1).map(|_| ())
    }
}

/// Bias of depth `r` under the input's rate model.
fn depth_bias(input: &CalibrationInput, r: usize) -> Result<f64> {
    let h = 1.0 / input.k0 as f64;
    match input.family {
        EstimatorKind::Crude | EstimatorKind::Mlmc => {
            Ok(input.c1.abs() * (h / (input.m as f64).powi(r as i32 - 1)).powf(input.alpha))
        }
        EstimatorKind::Ml2r => {
            let wv = solve_weights(&WeightSpec::new(input.alpha, input.m, r)?)?;
            let c_inf = input.c_inf.unwrap_or(input.c1.abs());
            Ok((wv.w_tilde * c_inf.powi(r as i32)).abs() * h.powf(input.alpha * r as f64))
        }
    }
}

fn level_variances(input: &CalibrationInput, geometry: &LevelGeometry) -> Result<Vec<f64>> {
    let Some(pilot) = &input.pilot else {
        return Err(Error::Refused("no pilot level variances; run a pilot on the same geometry first".into()));
    };
    if pilot.k0 != input.k0 || pilot.m != input.m {
        return invalid(format!(
            "pilot was run with (K0={}, M={}) but the plan asks for (K0={}, M={})",
            pilot.k0, pilot.m, input.k0, input.m
        ));
    }
    if pilot.variances.is_empty() || pilot.variances.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Refused("pilot variances missing or invalid; rerun the pilot".into()));
    }
    let mut v = Vec::with_capacity(geometry.r);
    for j in 1..=geometry.r {
        let value = if j <= pilot.variances.len() {
            pilot.variances[j - 1]
        } else if pilot.variances.len() >= 2 {
            let last = pilot.variances.len();
            pilot.variances[last - 1] * (input.m as f64).powf(-input.beta * (j - last) as f64)
        } else if let Some(v1) = input.v1 {
            v1 * (geometry.h_level(j - 1) - geometry.h_level(j)).powf(input.beta)
        } else {
            return Err(Error::Refused(format!(
                "pilot covers level 1 only and no V1 is given; cannot extrapolate to level {j}"
            )));
        };
        v.push(value);
    }
    Ok(v)
}

pub fn plan(input: &CalibrationInput) -> Result<CalibrationPlan> {
    input.validate()?;
    let target_bias = input.epsilon / 2f64.sqrt();

    if input.family == EstimatorKind::Crude {
        return plan_crude(input, target_bias);
    }

    let max_depth = match input.family {
        EstimatorKind::Ml2r => MAX_DEPTH,
        _ => MAX_MLMC_DEPTH,
    };
    let mut chosen = None;
    for r in 1..=max_depth {
        if LevelGeometry::new(input.k0, input.m, r).is_err() {
            break;
        }
        let b = depth_bias(input, r)?;
        if b <= target_bias {
            chosen = Some((r, b));
            break;
        }
    }
    let Some((r, predicted_bias)) = chosen else {
        return Err(Error::Refused(format!(
            "no depth up to {max_depth} brings the bias below eps/sqrt(2) = {target_bias:e}"
        )));
    };
    let geometry = LevelGeometry::new(input.k0, input.m, r)?;
    let weights = match input.family {
        EstimatorKind::Ml2r => Some(solve_weights(&WeightSpec::new(input.alpha, input.m, r)?)?),
        _ => None,
    };
    let factor = |j: usize| weights.as_ref().map_or(1.0, |w| w.level_factor(j));
    let v = level_variances(input, &geometry)?;

    // Weighted level variances; tiny floor keeps every share positive.
    let wv: Vec<f64> = (1..=r).map(|j| (factor(j).powi(2) * v[j - 1]).max(f64::MIN_POSITIVE)).collect();
    let cost: Vec<f64> = (1..=r).map(|j| level_cost(&geometry, j)).collect();
    let raw: Vec<f64> = (0..r).map(|i| (wv[i] / cost[i]).sqrt()).collect();
    let total: f64 = raw.iter().sum();
    let mut q: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let qsum: f64 = q.iter().sum();
    q.iter_mut().for_each(|x| *x /= qsum);
    let budget = 2.0 / input.epsilon.powi(2) * (0..r).map(|i| wv[i] / q[i]).sum::<f64>();
    if !(budget.is_finite() && budget < u64::MAX as f64) {
        return Err(Error::Refused(format!("sample budget {budget:e} is not representable")));
    }
    let allocation = Allocation::new((budget.ceil() as u64).max(1), q)?;

    let predicted_cost = (1..=r).map(|j| cost[j - 1] * allocation.level_samples(j) as f64).sum();
    let predicted_stat_error = (1..=r)
        .map(|j| factor(j).powi(2) * v[j - 1] / allocation.level_samples(j) as f64)
        .sum::<f64>()
        .sqrt();
    Ok(CalibrationPlan {
        family: input.family,
        epsilon: input.epsilon,
        geometry,
        allocation,
        weights,
        level_variances: v,
        predicted_cost,
        predicted_bias,
        predicted_stat_error,
    })
}

/// Crude nested Monte Carlo: the smallest `K >= K0` meeting the bias budget,
/// `N = 2 V / eps^2` with `V` the pilot's level-1 variance.
fn plan_crude(input: &CalibrationInput, target_bias: f64) -> Result<CalibrationPlan> {
    let c = input.c1.abs();
    let k_needed = if c == 0.0 { 1.0 } else { (c / target_bias).powf(1.0 / input.alpha).ceil() };
    if !(k_needed < (1u64 << 40) as f64) {
        return Err(Error::Refused(format!("crude inner count {k_needed:e} is out of range")));
    }
    let k = (k_needed as u64).max(input.k0);
    let Some(pilot) = &input.pilot else {
        return Err(Error::Refused("no pilot variance; run a pilot first".into()));
    };
    let Some(&var) = pilot.variances.first() else {
        return Err(Error::Refused("pilot has no level-1 variance".into()));
    };
    let n = ((2.0 * var / input.epsilon.powi(2)).ceil() as u64).max(2);
    let geometry = LevelGeometry::new(k, input.m, 1)?;
    let allocation = Allocation::new(n, vec![1.0])?;
    Ok(CalibrationPlan {
        family: EstimatorKind::Crude,
        epsilon: input.epsilon,
        geometry,
        allocation,
        weights: None,
        level_variances: vec![var],
        predicted_cost: (n * k) as f64,
        predicted_bias: c * (1.0 / k as f64).powf(input.alpha),
        predicted_stat_error: (var / n as f64).sqrt(),
    })
}

/// `K eps^{-2} exp(((1 - beta) / sqrt(alpha)) sqrt(2 log(1/eps) log M))`.
pub fn theoretical_cost(epsilon: f64, alpha: f64, beta: f64, m: u64, k: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    if m < 2 {
        return Err(Error::Domain(format!("M must be >= 2, got {m}")));
    }
    let exponent = (1.0 - beta) / alpha.sqrt() * (2.0 * (1.0 / epsilon).ln() * (m as f64).ln()).sqrt();
    Ok(k * epsilon.powi(-2) * exponent.exp())
}
