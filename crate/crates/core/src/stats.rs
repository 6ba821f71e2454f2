//! Small numerical toolbox shared by the estimators and the rate fits.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Streaming mean / variance (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &Accumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let (na, nb) = (self.n as f64, other.n as f64);
        self.mean += d * nb / n as f64;
        self.m2 += other.m2 + d * d * na * nb / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            return f64::INFINITY;
        }
        (self.variance() / self.n as f64).sqrt()
    }

    /// Plain average of the squares, `E[x^2]`.
    pub fn second_moment(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.m2 / self.n as f64 + self.mean * self.mean
    }
}

impl FromIterator<f64> for Accumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Accumulator::new();
        iter.into_iter().for_each(|x| acc.push(x));
        acc
    }
}

/// Least-squares fit of `log|y| = log|c| + a log x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    /// Signed prefactor `c` (the sign of the data).
    pub coefficient: f64,
    pub exponent_se: f64,
    pub r_squared: f64,
    log_intercept: f64,
    // Covariance of (intercept, slope) in log space.
    cov: [f64; 3],
}

impl PowerLawFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.coefficient * x.powf(self.exponent)
    }

    /// Two-standard-error band of the fitted curve at `x`, ordered `(lo, hi)`.
    pub fn band(&self, x: f64) -> (f64, f64) {
        let lx = x.ln();
        let var = self.cov[0] + lx * lx * self.cov[2] + 2.0 * lx * self.cov[1];
        let se = var.max(0.0).sqrt();
        let centre = self.log_intercept + self.exponent * lx;
        let sign = self.coefficient.signum();
        let a = sign * (centre - 2.0 * se).exp();
        let b = sign * (centre + 2.0 * se).exp();
        (a.min(b), a.max(b))
    }
}

/// Fits `y = c x^a` by (optionally inverse-variance weighted) least squares on
/// the log-log scale. All `y` must share one sign and be non-zero; `x > 0`.
///
/// With `y_se` supplied and every entry positive, point `i` gets weight
/// `(y_i / se_i)^2`, the inverse of the delta-method variance of `log|y_i|`.
pub fn fit_power_law(x: &[f64], y: &[f64], y_se: Option<&[f64]>) -> Result<PowerLawFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return invalid(format!("power-law fit needs >= 2 paired points, got {} x and {} y", n, y.len()));
    }
    if x.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return invalid("power-law fit abscissae must be positive");
    }
    if y.iter().any(|v| !v.is_finite() || *v == 0.0) {
        return invalid("power-law fit ordinates must be finite and non-zero");
    }
    let sign = y[0].signum();
    if y.iter().any(|v| v.signum() != sign) {
        return invalid("power-law fit ordinates change sign");
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();

    let weighted = match y_se {
        Some(se) if se.len() == n && se.iter().all(|s| s.is_finite() && *s > 0.0) => true,
        Some(se) if se.len() != n => return invalid("standard error vector length mismatch"),
        _ => false,
    };
    let w: Vec<f64> = match (weighted, y_se) {
        (true, Some(se)) => y.iter().zip(se).map(|(v, s)| (v / s).powi(2)).collect(),
        _ => vec![1.0; n],
    };

    let sw: f64 = w.iter().sum();
    let mx = lx.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = ly.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = lx[i] - mx;
        let dy = ly[i] - my;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    if sxx <= 0.0 {
        return invalid("power-law fit needs at least two distinct abscissae");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = (0..n).map(|i| w[i] * (ly[i] - intercept - slope * lx[i]).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - ssr / syy).clamp(0.0, 1.0) } else { 1.0 };

    // Residual scale: known variances when weighted, estimated otherwise.
    let sigma2 = if weighted {
        1.0
    } else if n > 2 {
        ssr / (n - 2) as f64
    } else {
        0.0
    };
    let var_slope = sigma2 / sxx;
    let var_int = sigma2 * (1.0 / sw + mx * mx / sxx);
    let cov_is = -mx * sigma2 / sxx;

    Ok(PowerLawFit {
        exponent: slope,
        coefficient: sign * intercept.exp(),
        exponent_se: var_slope.sqrt(),
        r_squared,
        log_intercept: intercept,
        cov: [var_int, cov_is, var_slope],
    })
}

/// Value at `t = 0` of the polynomial interpolating `(t_i, g_i)` (Neville).
pub fn extrapolate_to_zero(t: &[f64], g: &[f64]) -> Result<f64> {
    if t.is_empty() || t.len() != g.len() {
        return invalid("extrapolation needs matching, non-empty node and value lists");
    }
    let mut p = g.to_vec();
    let n = t.len();
    for level in 1..n {
        for i in 0..n - level {
            let (ti, tj) = (t[i], t[i + level]);
            if ti == tj {
                return invalid("extrapolation nodes must be distinct");
            }
            p[i] = (tj * p[i] - ti * p[i + 1]) / (tj - ti);
        }
    }
    Ok(p[0])
}

/// `int_{-inf}^{x} g(u) du` for an integrand with (at least) Gaussian-like
/// decay, through `u = x - scale * s / (1 - s)` and composite Simpson on `[0, 1]`.
pub fn integrate_lower_tail<G: Fn(f64) -> f64>(g: G, x: f64, scale: f64) -> f64 {
    const INTERVALS: usize = 20_000;
    let step = 1.0 / INTERVALS as f64;
    let integrand = |s: f64| -> f64 {
        if s >= 1.0 {
            return 0.0;
        }
        let one_minus = 1.0 - s;
        let u = x - scale * s / one_minus;
        let v = g(u) * scale / (one_minus * one_minus);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let mut total = integrand(0.0) + integrand(1.0);
    for i in 1..INTERVALS {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        total += w * integrand(i as f64 * step);
    }
    total * step / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn accumulator_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1 - 3.0).collect();
        let whole: Accumulator = xs.iter().copied().collect();
        let mut merged = Accumulator::new();
        for chunk in xs.chunks(77) {
            merged.merge(&chunk.iter().copied().collect());
        }
        assert_eq!(merged.count(), 1000);
        assert_relative_eq!(merged.mean(), whole.mean(), epsilon = 1e-12);
        assert_relative_eq!(merged.variance(), whole.variance(), max_relative = 1e-12);
        let direct = xs.iter().map(|x| x * x).sum::<f64>() / 1000.0;
        assert_relative_eq!(whole.second_moment(), direct, max_relative = 1e-12);
    }

    #[test]
    fn normal_helpers() {
        assert_relative_eq!(norm_cdf(0.0), 0.5, epsilon = 1e-16);
        assert_relative_eq!(norm_cdf(1.0), 0.841_344_746_068_542_9, epsilon = 1e-15);
        assert_relative_eq!(norm_pdf(1.0), 0.241_970_724_519_143_37, epsilon = 1e-16);
    }

    #[test]
    fn neville_recovers_polynomial_constant() {
        let t = [1.0, 0.5, 0.25, 0.125];
        let g: Vec<f64> = t.iter().map(|x| 3.0 - 2.0 * x + 0.5 * x * x * x).collect();
        assert_relative_eq!(extrapolate_to_zero(&t, &g).unwrap(), 3.0, epsilon = 1e-12);
        assert!(extrapolate_to_zero(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn tail_integral_of_gaussian() {
        let v = integrate_lower_tail(norm_pdf, 0.7, 1.0);
        assert_relative_eq!(v, norm_cdf(0.7), epsilon = 1e-10);
        // int_{-inf}^a (x^2 - 1) phi(x) dx = -a phi(a)
        let v = integrate_lower_tail(|x| (x * x - 1.0) * norm_pdf(x), 1.0, 1.0);
        assert_relative_eq!(v, -norm_pdf(1.0), epsilon = 1e-10);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_power_law(&[1.0], &[1.0], None).is_err());
        assert!(fit_power_law(&[1.0, 2.0], &[1.0, -1.0], None).is_err());
        assert!(fit_power_law(&[1.0, 2.0], &[0.0, 1.0], None).is_err());
        assert!(fit_power_law(&[1.0, 1.0], &[1.0, 2.0], None).is_err());
    }
}
