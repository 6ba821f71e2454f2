//! Loss-probability testbed: a call option revalued at an intermediate date.
//!
//! `Y = S_{t1}` under geometric Brownian motion, `F(y, z)` is the discounted
//! call payoff at maturity reached from `y` with a Gaussian increment `z`, so
//! `phi_0(y)` is the Black-Scholes price `C(y)` and the payoff
//! `1{C(Y) >= q}` asks how likely the position is worth at least `q` at `t1`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{AnalyticOracles, Direction, InnerProblem, NestedModel, Payoff, StreamRng};
use crate::error::{invalid, Result};
use crate::stats::norm_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsParams {
    pub s0: f64,
    pub rate: f64,
    pub vol: f64,
    pub t1: f64,
    pub maturity: f64,
    pub strike: f64,
}

impl Default for BsParams {
    fn default() -> Self {
        Self { s0: 100.0, rate: 0.03, vol: 0.2, t1: 1.0 / 12.0, maturity: 0.5, strike: 100.0 }
    }
}

impl BsParams {
    fn validate(&self) -> Result<()> {
        if !(self.s0 > 0.0 && self.strike > 0.0) {
            return invalid("s0 and strike must be positive");
        }
        if !(self.vol > 0.0) {
            return invalid(format!("vol must be positive, got {}", self.vol));
        }
        if !(self.t1 > 0.0 && self.t1 < self.maturity) {
            return invalid(format!("need 0 < t1 < T, got t1 = {}, T = {}", self.t1, self.maturity));
        }
        if !self.rate.is_finite() {
            return invalid("rate must be finite");
        }
        Ok(())
    }

    fn tau(&self) -> f64 {
        self.maturity - self.t1
    }

    /// `S_{t1}` as a function of the standard Gaussian driver `w`.
    fn spot_at_t1(&self, w: f64) -> f64 {
        self.s0 * ((self.rate - 0.5 * self.vol * self.vol) * self.t1 + self.vol * self.t1.sqrt() * w).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsNested {
    params: BsParams,
    discount: f64,
    drift: f64,
    diffusion: f64,
}

impl BsNested {
    pub fn params(&self) -> &BsParams {
        &self.params
    }
}

/// Black-Scholes call price with time to maturity `tau` from spot `y`.
pub fn call_price(y: f64, strike: f64, rate: f64, vol: f64, tau: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let sd = vol * tau.sqrt();
    let d1 = ((y / strike).ln() + (rate + 0.5 * vol * vol) * tau) / sd;
    let d2 = d1 - sd;
    y * norm_cdf(d1) - strike * (-rate * tau).exp() * norm_cdf(d2)
}

impl InnerProblem for BsNested {
    type Outer = f64;
    type Inner = f64;

    #[inline]
    fn sample_outer(&self, rng: &mut StreamRng) -> f64 {
        self.params.spot_at_t1(rng.sample(StandardNormal))
    }

    #[inline]
    fn sample_inner(&self, rng: &mut StreamRng) -> f64 {
        rng.sample(StandardNormal)
    }

    #[inline]
    fn inner_fn(&self, y: &f64, z: &f64) -> f64 {
        let st = y * (self.drift + self.diffusion * z).exp();
        self.discount * (st - self.params.strike).max(0.0)
    }

    fn conditional_mean(&self, y: &f64) -> Option<f64> {
        let p = &self.params;
        Some(call_price(*y, p.strike, p.rate, p.vol, p.tau()))
    }
}

/// `P(C(S_{t1}) >= q)` by bisection on the Gaussian driver of `S_{t1}`;
/// `C` is increasing in the spot, so the event is `{W >= w*}`.
pub(crate) fn loss_probability(params: &BsParams, q: f64) -> Option<f64> {
    let price = |w: f64| call_price(params.spot_at_t1(w), params.strike, params.rate, params.vol, params.tau());
    let (mut lo, mut hi) = (-40.0, 40.0);
    if price(lo) >= q {
        return Some(1.0);
    }
    if price(hi) < q {
        return Some(0.0);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if price(mid) >= q {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let w_star = 0.5 * (lo + hi);
    w_star.is_finite().then(|| norm_cdf(-w_star))
}

pub fn builtin_bs_nested(params: BsParams, loss_threshold: f64) -> Result<NestedModel<BsNested>> {
    params.validate()?;
    if loss_threshold.is_nan() {
        return invalid("loss threshold must not be NaN");
    }
    let tau = params.tau();
    let problem = BsNested {
        params,
        discount: (-params.rate * tau).exp(),
        drift: (params.rate - 0.5 * params.vol * params.vol) * tau,
        diffusion: params.vol * tau.sqrt(),
    };
    let target = loss_probability(&params, loss_threshold);
    if target.is_none() {
        log::warn!("loss-probability inversion failed for q = {loss_threshold}; target oracle omitted");
    }
    let oracles = AnalyticOracles { target, ..AnalyticOracles::default() };
    Ok(NestedModel::new("bs_nested", problem, Payoff::indicator(loss_threshold, Direction::Above))
        .with_oracles(oracles)
        .with_moment_order(f64::INFINITY))
}
