//! Weak and strong error rates: empirical fits, expansion checks and the
//! explicit bounds they are compared against.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimator::{accumulate_replicates, estimate_crude, estimate_ml2r, sample_level_mapped, sample_prefix_means, Allocation, CouplingMode, LevelGeometry};
use crate::exec::Executor;
use crate::model::{InnerProblem, NestedModel, StreamKey};
use crate::stats::{extrapolate_to_zero, fit_power_law, integrate_lower_tail, Accumulator, PowerLawFit};
use crate::weights::{solve_weights, WeightSpec, WeightVector};

/// A bias or squared difference is treated as noise below this many standard errors.
const NOISE_SE: f64 = 4.0;
/// Replicate batches behind the strong-rate confidence interval.
const STRONG_BATCHES: u64 = 8;
/// Outer draws for the Monte Carlo residual-norm fallback.
const NORM_FALLBACK_SAMPLES: u64 = 100_000;

/// Marcinkiewicz-Zygmund constant `B_p = 18 p^{3/2} / (p - 1)^{1/2}`.
pub fn mz_constant(p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::Domain(format!("B_p needs p > 1, got {p}")));
    }
    if p - 1.0 < 1e-12 {
        return Ok(f64::INFINITY);
    }
    Ok(18.0 * p.powf(1.5) / (p - 1.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// Zero for closed-form values.
    pub std_error: f64,
}

/// `||Xi - E[Xi | Y]||_p`, from the model oracle when present.
///
/// Otherwise the norm is estimated from `n` outer draws. Without a closed-form
/// conditional mean the pairwise difference `F(Y, Z) - F(Y, Z')` is used; by
/// conditional Jensen its norm dominates the residual norm, so bounds built on
/// it stay valid.
pub fn inner_residual_norm<P: InnerProblem>(
    model: &NestedModel<P>,
    p: f64,
    n: u64,
    key: StreamKey,
    exec: &Executor,
) -> Result<Estimate> {
    if !(p >= 1.0) || p > model.moment_order {
        return Err(Error::Contract(format!(
            "residual norm of order {p} requested but the model only asserts moments of order {}",
            model.moment_order
        )));
    }
    if let Some(norm) = &model.oracles.inner_residual_norm {
        return Ok(Estimate { value: norm(p), std_error: 0.0 });
    }
    if n < 2 {
        return invalid("residual norm estimate needs n >= 2");
    }
    let problem = &model.problem;
    let acc = accumulate_replicates(exec, n, key, || (), |_, rng| {
        let y = problem.sample_outer(rng);
        let a = problem.inner_fn(&y, &problem.sample_inner(rng));
        let d = match problem.conditional_mean(&y) {
            Some(m) => a - m,
            None => a - problem.inner_fn(&y, &problem.sample_inner(rng)),
        };
        if !d.is_finite() {
            return Err(Error::Evaluation { y: format!("{y:?}"), k: 1, value: d });
        }
        Ok(d.abs().powf(p))
    })?;
    let m = acc.mean();
    let value = m.powf(1.0 / p);
    let std_error = if m > 0.0 { value / (p * m) * acc.std_error() } else { 0.0 };
    Ok(Estimate { value, std_error })
}

/// `2 B_p ||Xi - E[Xi | Y]||_p |h - h'|^{1/2}`, an upper bound on `||X_h - X_{h'}||_p`.
pub fn strong_bound_xh<P: InnerProblem>(
    model: &NestedModel<P>,
    p: f64,
    h: f64,
    h_prime: f64,
    key: StreamKey,
    exec: &Executor,
) -> Result<Estimate> {
    let bp = mz_constant(p)?;
    if !(h >= 0.0 && h_prime >= 0.0) {
        return Err(Error::Domain(format!("bias parameters must be non-negative, got {h}, {h_prime}")));
    }
    let norm = inner_residual_norm(model, p, NORM_FALLBACK_SAMPLES, key, exec)?;
    let scale = 2.0 * bp * (h - h_prime).abs().sqrt();
    Ok(Estimate { value: scale * norm.value, std_error: scale * norm.std_error })
}

/// `(p^{p/(p+1)} + p^{1/(p+1)}) (sup f_0 + sup f_h)^{p/(p+1)} delta_p^{p/(p+1)}`,
/// an upper bound on `||1{xi <= x} - 1{xi' <= x}||_2^2` when `||xi - xi'||_p = delta_p`.
pub fn indicator_strong_bound(p: f64, sup_f0: f64, sup_fh: f64, delta_p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("indicator bound needs p >= 1, got {p}")));
    }
    for (name, v) in [("sup_f0", sup_f0), ("sup_fh", sup_fh), ("delta_p", delta_p)] {
        if !(v >= 0.0) || v.is_infinite() {
            return Err(Error::Domain(format!("{name} must be finite and non-negative, got {v}")));
        }
    }
    let e = p / (p + 1.0);
    let constant = p.powf(e) + p.powf(1.0 / (p + 1.0));
    Ok(constant * (sup_f0 + sup_fh).powf(e) * delta_p.powf(e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateKind {
    Weak,
    Strong,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub h: f64,
    /// Bias (weak) or mean squared level difference (strong).
    pub value: f64,
    pub stderr: f64,
    /// Two-standard-error band of the fit; `None` without a fit.
    pub fit_lo: Option<f64>,
    pub fit_hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub kind: RateKind,
    pub alpha_hat: Option<f64>,
    pub c1_hat: Option<f64>,
    pub beta_hat: Option<f64>,
    #[serde(rename = "V1_hat")]
    pub v1_hat: Option<f64>,
    /// Standard error of the fitted exponent.
    pub exponent_se: Option<f64>,
    /// Replicate-batch interval for the exponent (strong fits only).
    pub exponent_ci: Option<(f64, f64)>,
    pub r_squared: Option<f64>,
    /// Strictly decreasing.
    pub grid: Vec<f64>,
    pub per_h: Vec<RateRow>,
    /// Richardson coefficients `c_1, c_2, ...` of `bias = sum_r c_r h^{alpha r}`
    /// (analytic weak fits only).
    pub coefficients: Option<Vec<f64>>,
    pub inconclusive: bool,
    pub reason: Option<String>,
}

impl RateReport {
    /// `h,value,stderr,fit_lo,fit_hi`, values with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "h,value,stderr,fit_lo,fit_hi")?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        for r in &self.per_h {
            writeln!(w, "{:.16e},{:.16e},{:.16e},{},{}", r.h, r.value, r.stderr, opt(r.fit_lo), opt(r.fit_hi))?;
        }
        Ok(())
    }

    fn exponent(&self) -> Option<f64> {
        self.alpha_hat.or(self.beta_hat)
    }

    /// Fitted exponent, or an error naming why the fit is inconclusive.
    pub fn require_exponent(&self) -> Result<f64> {
        match (self.inconclusive, self.exponent()) {
            (false, Some(e)) => Ok(e),
            _ => Err(Error::Refused(format!(
                "rate fit inconclusive: {}",
                self.reason.as_deref().unwrap_or("no exponent")
            ))),
        }
    }
}

fn inconclusive_report(kind: RateKind, grid: Vec<f64>, per_h: Vec<RateRow>, reason: String) -> RateReport {
    RateReport {
        kind,
        alpha_hat: None,
        c1_hat: None,
        beta_hat: None,
        v1_hat: None,
        exponent_se: None,
        exponent_ci: None,
        r_squared: None,
        grid,
        per_h,
        coefficients: None,
        inconclusive: true,
        reason: Some(reason),
    }
}

fn sort_descending(h: &[f64], value: &[f64], se: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if h.len() != value.len() || h.len() != se.len() {
        return invalid("rate table columns differ in length");
    }
    let mut idx: Vec<usize> = (0..h.len()).collect();
    idx.sort_by(|&a, &b| h[b].total_cmp(&h[a]));
    if idx.windows(2).any(|w| h[w[0]] == h[w[1]]) {
        return invalid("rate table has repeated h values");
    }
    Ok((idx.iter().map(|&i| h[i]).collect(), idx.iter().map(|&i| value[i]).collect(), idx.iter().map(|&i| se[i]).collect()))
}

fn rows_with_fit(h: &[f64], value: &[f64], se: &[f64], x: &[f64], fit: Option<&PowerLawFit>) -> Vec<RateRow> {
    (0..h.len())
        .map(|i| {
            let band = fit.map(|f| f.band(x[i]));
            RateRow { h: h[i], value: value[i], stderr: se[i], fit_lo: band.map(|b| b.0), fit_hi: band.map(|b| b.1) }
        })
        .collect()
}

/// Fits `bias(h) = c_1 h^alpha` to a precomputed table. Points whose bias is
/// within four standard errors of zero count as noise; if they make up at
/// least half the table the report is flagged inconclusive and carries no
/// numbers.
pub fn fit_weak_from_table(h: &[f64], bias: &[f64], stderr: &[f64]) -> Result<RateReport> {
    let (h, bias, se) = sort_descending(h, bias, stderr)?;
    if h.len() < 2 {
        return invalid("weak-rate fit needs at least two grid points");
    }
    if h.iter().any(|v| !(*v > 0.0)) {
        return invalid("grid values must be positive");
    }
    let noisy = bias.iter().zip(&se).filter(|(b, s)| b.abs() <= NOISE_SE * **s).count();
    if 2 * noisy >= h.len() {
        let rows = rows_with_fit(&h, &bias, &se, &h, None);
        return Ok(inconclusive_report(
            RateKind::Weak,
            h,
            rows,
            format!("bias indistinguishable from noise at {noisy} of {} grid points", bias.len()),
        ));
    }
    let fit = match fit_power_law(&h, &bias, Some(&se)) {
        Ok(f) => f,
        Err(e) => {
            let rows = rows_with_fit(&h, &bias, &se, &h, None);
            return Ok(inconclusive_report(RateKind::Weak, h, rows, e.to_string()));
        }
    };
    let rows = rows_with_fit(&h, &bias, &se, &h, Some(&fit));
    Ok(RateReport {
        kind: RateKind::Weak,
        alpha_hat: Some(fit.exponent),
        c1_hat: Some(fit.coefficient),
        beta_hat: None,
        v1_hat: None,
        exponent_se: Some(fit.exponent_se),
        exponent_ci: None,
        r_squared: Some(fit.r_squared),
        grid: h,
        per_h: rows,
        coefficients: None,
        inconclusive: false,
        reason: None,
    })
}

/// Sequential Richardson elimination on `bias(h) = sum_{r>=1} c_r h^{alpha r}`:
/// `c_r` is the value at zero of `(bias - sum_{s<r} c_s t^s) / t^r`, `t = h^alpha`.
pub fn richardson_coefficients(h: &[f64], bias: &[f64], alpha: f64, order: usize) -> Result<Vec<f64>> {
    if order == 0 || h.len() < order + 1 || h.len() != bias.len() {
        return invalid(format!("{order} coefficients need at least {} matching points", order + 1));
    }
    let t: Vec<f64> = h.iter().map(|v| v.powf(alpha)).collect();
    let mut coeffs: Vec<f64> = Vec::with_capacity(order);
    for r in 1..=order {
        let g: Vec<f64> = (0..t.len())
            .map(|i| {
                let lower: f64 = coeffs.iter().enumerate().map(|(s, c)| c * t[i].powi(s as i32 + 1)).sum();
                (bias[i] - lower) / t[i].powi(r as i32)
            })
            .collect();
        coeffs.push(extrapolate_to_zero(&t, &g)?);
    }
    Ok(coeffs)
}

/// Estimator whose bias is measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeakEstimator {
    Crude,
    /// Weighted estimator of depth `r`, root `m`, weights solved for `alpha`.
    Ml2r { r: usize, m: u64, alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BiasPath {
    /// Exact `E[f(X_h)]` from the model oracle.
    Analytic,
    /// `n` replicates per grid point (and per level for the weighted estimator).
    MonteCarlo { n: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakRateSpec {
    pub estimator: WeakEstimator,
    pub path: BiasPath,
    pub h_grid: Vec<f64>,
    /// Target override; without it and without an oracle target, bias is
    /// measured against a paired finer reference level.
    #[serde(default)]
    pub reference: Option<f64>,
}

fn check_geometric(h: &[f64]) -> Result<f64> {
    if h.len() < 4 {
        return invalid(format!("h grid needs at least 4 points, got {}", h.len()));
    }
    if h.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return invalid("h grid values must be positive");
    }
    let mut s = h.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let ratio = s[0] / s[1];
    if !(ratio > 1.0 + 1e-12) || s.windows(2).any(|w| ((w[0] / w[1]) / ratio - 1.0).abs() > 1e-9) {
        return invalid("h grid must be geometric with distinct points");
    }
    Ok(ratio)
}

fn inner_count_for(h: f64) -> Result<u64> {
    let k = (1.0 / h).round();
    if k < 1.0 || (k * h - 1.0).abs() > 1e-9 {
        return invalid(format!("h = {h} is not the reciprocal of an integer inner count"));
    }
    Ok(k as u64)
}

/// Measures `bias(h)` of the requested estimator on `spec.h_grid` and fits
/// its order.
pub fn fit_weak_rate<P: InnerProblem>(
    model: &NestedModel<P>,
    spec: &WeakRateSpec,
    key: StreamKey,
    exec: &Executor,
) -> Result<RateReport> {
    let grid_ratio = check_geometric(&spec.h_grid)?;
    let weights: Option<WeightVector> = match spec.estimator {
        WeakEstimator::Crude => None,
        WeakEstimator::Ml2r { r, m, alpha } => Some(solve_weights(&WeightSpec::new(alpha, m, r)?)?),
    };
    let level_hs = |h: f64| -> Vec<f64> {
        match spec.estimator {
            WeakEstimator::Crude => vec![h],
            WeakEstimator::Ml2r { r, m, .. } => (0..r).map(|j| h / (m as f64).powi(j as i32)).collect(),
        }
    };
    let w: Vec<f64> = weights.as_ref().map_or(vec![1.0], |wv| wv.w.clone());
    let target = spec.reference.or_else(|| model.target());

    let mut bias = Vec::with_capacity(spec.h_grid.len());
    let mut se = Vec::with_capacity(spec.h_grid.len());
    match spec.path {
        BiasPath::Analytic => {
            if model.oracles.mean_payoff_at.is_none() {
                return Err(Error::Unsupported(format!(
                    "model '{}' with payoff '{}' has no closed-form E[f(X_h)]; use the Monte Carlo path",
                    model.name,
                    model.payoff.label()
                )));
            }
            let target = target.expect("mean oracle implies a target");
            for &h in &spec.h_grid {
                let v: f64 = level_hs(h).iter().zip(&w).map(|(hj, wj)| wj * model.mean_payoff_at(*hj).unwrap()).sum();
                bias.push(v - target);
                se.push(0.0);
            }
        }
        BiasPath::MonteCarlo { n } => {
            if n < 2 {
                return invalid("Monte Carlo bias path needs n >= 2");
            }
            let h_min = spec.h_grid.iter().copied().fold(f64::INFINITY, f64::min);
            for (i, &h) in spec.h_grid.iter().enumerate() {
                let k = inner_count_for(h)?;
                let point_key = key.child(i as u64);
                match target {
                    Some(t) => {
                        let r = match (&spec.estimator, &weights) {
                            (WeakEstimator::Ml2r { r, m, .. }, Some(wv)) => {
                                let g = LevelGeometry::new(k, *m, *r)?;
                                let a = Allocation::uniform(n * *r as u64, *r)?;
                                estimate_ml2r(model, &g, &a, wv, CouplingMode::Standard, point_key, exec)?
                            }
                            _ => estimate_crude(model, k, n, point_key, exec)?,
                        };
                        bias.push(r.value - t);
                        se.push(r.std_error);
                    }
                    None => {
                        // Paired against a finer reference level on the same draws.
                        let m_ref = match spec.estimator {
                            WeakEstimator::Crude => grid_ratio,
                            WeakEstimator::Ml2r { m, .. } => m as f64,
                        };
                        let mut counts: Vec<u64> = level_hs(h).iter().map(|hj| inner_count_for(*hj)).collect::<Result<_>>()?;
                        let finest = *counts.last().unwrap();
                        let k_ref = ((m_ref * m_ref / h_min).round() as u64).max(finest + 1);
                        counts.push(k_ref);
                        let acc = sample_prefix_means(model, &counts, n, point_key, exec, |_y, x| {
                            let (levels, reference) = x.split_at(x.len() - 1);
                            levels.iter().zip(&w).map(|(xj, wj)| wj * model.payoff.eval(*xj)).sum::<f64>()
                                - model.payoff.eval(reference[0])
                        })?;
                        if !acc.mean().is_finite() {
                            return Err(Error::NonFinitePayoff { x: f64::NAN, value: acc.mean() });
                        }
                        bias.push(acc.mean());
                        se.push(acc.std_error());
                    }
                }
            }
        }
    }

    let mut report = fit_weak_from_table(&spec.h_grid, &bias, &se)?;
    if spec.path == BiasPath::Analytic && !report.inconclusive && spec.h_grid.len() >= 3 {
        // The nested bias expands in integer powers of h.
        let alpha = match spec.estimator {
            WeakEstimator::Crude => 1.0,
            WeakEstimator::Ml2r { alpha, .. } => alpha,
        };
        report.coefficients = richardson_coefficients(&report.grid, &report.per_h.iter().map(|r| r.value).collect::<Vec<_>>(), alpha, 2).ok();
    }
    Ok(report)
}

/// Estimates `E[(level difference)^2]` on the probed levels and fits
/// `E[diff_j^2] = V_1 |h_{j-1} - h_j|^beta`.
pub fn fit_strong_rate<P: InnerProblem>(
    model: &NestedModel<P>,
    geometry: &LevelGeometry,
    mode: CouplingMode,
    levels: &[usize],
    n: u64,
    key: StreamKey,
    exec: &Executor,
) -> Result<RateReport> {
    geometry.validate()?;
    let mut levels = levels.to_vec();
    levels.sort_unstable();
    levels.dedup();
    if levels.len() < 4 {
        return invalid(format!("strong-rate fit needs at least 4 distinct probe levels, got {}", levels.len()));
    }
    if levels[0] < 2 || *levels.last().unwrap() > geometry.r {
        return invalid(format!("probe levels must lie in 2..={}", geometry.r));
    }
    if n < 2 * STRONG_BATCHES {
        return invalid(format!("strong-rate fit needs N >= {}", 2 * STRONG_BATCHES));
    }
    let per_batch = n.div_ceil(STRONG_BATCHES);
    let mut h = Vec::new();
    let mut dh = Vec::new();
    let mut value = Vec::new();
    let mut se = Vec::new();
    let mut batch_means = vec![Vec::new(); STRONG_BATCHES as usize];
    for &j in &levels {
        let level_key = key.child(j as u64);
        let mut total = Accumulator::new();
        for (b, means) in batch_means.iter_mut().enumerate() {
            let acc = sample_level_mapped(model, geometry, j, mode, per_batch, level_key.child(b as u64), exec, |v| v * v)?;
            means.push(acc.mean());
            total.merge(&acc);
        }
        h.push(geometry.h_level(j));
        dh.push(geometry.h_level(j - 1) - geometry.h_level(j));
        value.push(total.mean());
        se.push(total.std_error());
    }

    let noisy = value.iter().zip(&se).any(|(v, s)| !(*v > 0.0) || *s > 0.5 * v);
    if noisy {
        let rows = rows_with_fit(&h, &value, &se, &dh, None);
        return Ok(inconclusive_report(RateKind::Strong, h, rows, "level second moment dominated by noise or zero".into()));
    }
    let fit = fit_power_law(&dh, &value, Some(&se))?;

    let slopes: Vec<f64> = batch_means
        .iter()
        .filter(|m| m.iter().all(|v| *v > 0.0))
        .filter_map(|m| fit_power_law(&dh, m, None).ok().map(|f| f.exponent))
        .collect();
    let exponent_ci = (slopes.len() >= 2).then(|| {
        let acc: Accumulator = slopes.iter().copied().collect();
        let half = 2.0 * acc.std_error();
        (acc.mean() - half, acc.mean() + half)
    });

    let rows = rows_with_fit(&h, &value, &se, &dh, Some(&fit));
    Ok(RateReport {
        kind: RateKind::Strong,
        alpha_hat: None,
        c1_hat: None,
        beta_hat: Some(fit.exponent),
        v1_hat: Some(fit.coefficient),
        exponent_se: Some(fit.exponent_se),
        exponent_ci,
        r_squared: Some(fit.r_squared),
        grid: h,
        per_h: rows,
        coefficients: None,
        inconclusive: false,
        reason: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRow {
    pub x: f64,
    /// `F_{X_0}(x)`
    pub cdf0: f64,
    /// `E[P_1(X_0) 1{X_0 <= x}]` by quadrature.
    pub p1_integral: f64,
    /// `c_1, c_2` of `F_{X_h}(x) - F_{X_0}(x) = c_1 h + c_2 h^2 + ...` by Richardson elimination.
    pub coefficients: Vec<f64>,
    /// `|c_1 - p1_integral| / |p1_integral|`, when the integral is non-zero.
    pub first_order_rel_error: Option<f64>,
    /// `D(h, x) = F_{X_h}(x) - F_{X_0}(x) - h E[P_1(X_0) 1{X_0 <= x}]` on the grid.
    pub remainder: Vec<f64>,
    pub remainder_slope: Option<f64>,
    pub remainder_r_squared: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCheck {
    /// Order of the verified expansion.
    pub order: usize,
    /// Strictly decreasing.
    pub h_grid: Vec<f64>,
    pub rows: Vec<ExpansionRow>,
}

/// First-order CDF expansion `F_{X_h} = F_{X_0} + h E[P_1(X_0) 1{X_0 <= x}] + O(h^{3/2})`
/// checked pointwise against the model's closed-form CDF.
pub fn cdf_expansion_check<P: InnerProblem>(model: &NestedModel<P>, x_grid: &[f64], h_grid: &[f64]) -> Result<ExpansionCheck> {
    let o = &model.oracles;
    let (Some(cdf), Some(p1), Some(f0)) = (&o.cdf_xh, &o.p1, &o.density_x0) else {
        return Err(Error::Unsupported(format!(
            "model '{}' lacks the CDF, density or P_1 oracle needed for the expansion check",
            model.name
        )));
    };
    if x_grid.is_empty() {
        return invalid("x grid is empty");
    }
    let mut h = h_grid.to_vec();
    h.sort_by(|a, b| b.total_cmp(a));
    if h.len() < 3 || h.windows(2).any(|w| w[0] == w[1]) || h.iter().any(|v| !(*v > 0.0)) {
        return invalid("expansion check needs at least 3 distinct positive h values");
    }
    let scale = o.x0_scale.unwrap_or(1.0);
    let rows = x_grid
        .iter()
        .map(|&x| -> Result<ExpansionRow> {
            let cdf0 = cdf(0.0, x);
            let p1_integral = integrate_lower_tail(|u| p1(u) * f0(u), x, scale);
            let diff: Vec<f64> = h.iter().map(|hv| cdf(*hv, x) - cdf0).collect();
            let coefficients = richardson_coefficients(&h, &diff, 1.0, 2)?;
            let remainder: Vec<f64> = h.iter().zip(&diff).map(|(hv, d)| d - hv * p1_integral).collect();
            let fit = fit_power_law(&h, &remainder, None).ok();
            Ok(ExpansionRow {
                x,
                cdf0,
                p1_integral,
                first_order_rel_error: (p1_integral != 0.0).then(|| ((coefficients[0] - p1_integral) / p1_integral).abs()),
                coefficients,
                remainder,
                remainder_slope: fit.as_ref().map(|f| f.exponent),
                remainder_r_squared: fit.as_ref().map(|f| f.r_squared),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExpansionCheck { order: 1, h_grid: h, rows })
}
