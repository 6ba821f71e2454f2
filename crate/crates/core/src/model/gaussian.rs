//! `Y ~ N(mu_Y, sigma_Y^2)`, `Z ~ N(0, 1)`, `F(y, z) = y + sigma z`.
//!
//! Here `X_0 = Y` and `X_h ~ N(mu_Y, sigma_Y^2 + sigma^2 h)`, so the law of every
//! proxy is Gaussian and most oracles are closed forms.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{AnalyticOracles, Direction, InnerProblem, NestedModel, Payoff, PayoffSpec, StreamRng};
use crate::error::{invalid, Result};
use crate::stats::{norm_cdf, norm_pdf, INV_SQRT_2PI};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianLinear {
    pub mu_y: f64,
    pub sigma_y: f64,
    pub sigma: f64,
}

impl InnerProblem for GaussianLinear {
    type Outer = f64;
    type Inner = f64;

    #[inline]
    fn sample_outer(&self, rng: &mut StreamRng) -> f64 {
        let w: f64 = rng.sample(StandardNormal);
        self.mu_y + self.sigma_y * w
    }

    #[inline]
    fn sample_inner(&self, rng: &mut StreamRng) -> f64 {
        rng.sample(StandardNormal)
    }

    #[inline]
    fn inner_fn(&self, y: &f64, z: &f64) -> f64 {
        y + self.sigma * z
    }

    fn conditional_mean(&self, y: &f64) -> Option<f64> {
        Some(*y)
    }

    fn conditional_variance(&self, _y: &f64) -> Option<f64> {
        Some(self.sigma * self.sigma)
    }
}

/// `E|N(0,1)|^p = 2^{p/2} Gamma((p+1)/2) / sqrt(pi)`.
pub(crate) fn std_normal_abs_moment(p: f64) -> f64 {
    2f64.powf(p / 2.0) * libm::tgamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

pub fn builtin_gaussian_linear(mu_y: f64, sigma_y: f64, sigma: f64, payoff: Payoff) -> Result<NestedModel<GaussianLinear>> {
    if !(sigma_y.is_finite() && sigma_y > 0.0) {
        return invalid(format!("sigma_Y must be positive, got {sigma_y}"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return invalid(format!("sigma must be positive, got {sigma}"));
    }
    if !mu_y.is_finite() {
        return invalid("mu_Y must be finite");
    }
    let s2 = sigma_y * sigma_y;
    let var_at = move |h: f64| s2 + sigma * sigma * h;

    let mean_payoff_at: Option<super::ScalarFn> = payoff.spec().map(|spec| -> super::ScalarFn {
        match spec {
            PayoffSpec::Square => Arc::new(move |h| mu_y * mu_y + var_at(h)),
            PayoffSpec::Affine { a, b } => Arc::new(move |_h| a * mu_y + b),
            PayoffSpec::PositivePart => Arc::new(move |h| {
                let sd = var_at(h).sqrt();
                mu_y * norm_cdf(mu_y / sd) + sd * norm_pdf(mu_y / sd)
            }),
            PayoffSpec::Indicator { threshold, direction } => Arc::new(move |h| {
                let z = (threshold - mu_y) / var_at(h).sqrt();
                match direction {
                    Direction::Below => norm_cdf(z),
                    Direction::Above => norm_cdf(-z),
                }
            }),
        }
    });

    let oracles = AnalyticOracles {
        mean_payoff_at,
        target: None,
        density_x0: Some(Arc::new(move |x| norm_pdf((x - mu_y) / sigma_y) / sigma_y)),
        density_sup: Some(Arc::new(move |h| INV_SQRT_2PI / var_at(h).sqrt())),
        cdf_xh: Some(Arc::new(move |h, x| norm_cdf((x - mu_y) / var_at(h).sqrt()))),
        p1: Some(Arc::new(move |x| {
            let u = (x - mu_y) / sigma_y;
            sigma * sigma * (u * u - 1.0) / (2.0 * s2)
        })),
        strong_l2: Some(Arc::new(move |h, hp| sigma * (h - hp).abs().sqrt())),
        inner_residual_norm: Some(Arc::new(move |p| sigma * std_normal_abs_moment(p).powf(1.0 / p))),
        x0_scale: Some(sigma_y),
    };

    Ok(NestedModel::new("gaussian_linear", GaussianLinear { mu_y, sigma_y, sigma }, payoff)
        .with_oracles(oracles)
        .with_moment_order(f64::INFINITY))
}
