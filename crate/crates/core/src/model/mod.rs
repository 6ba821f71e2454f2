//! Nested-expectation problems `E[f(E[F(Y, Z) | Y])]`.
//!
//! A problem supplies the outer law of `Y`, the inner law of `Z` and the inner
//! function `F`; a [`NestedModel`] pairs it with a payoff `f` and whatever
//! closed-form oracles are known for it.

mod bs;
mod gaussian;
mod payoff;
pub mod stream;

use std::fmt::Debug;
use std::sync::Arc;

pub use bs::{builtin_bs_nested, call_price, BsNested, BsParams};
pub use gaussian::{builtin_gaussian_linear, GaussianLinear};
pub use payoff::{Direction, Payoff, PayoffKind, PayoffSpec};
pub use stream::{StreamKey, StreamRng};

use crate::error::{Error, Result};

/// Sampler triple `(Y-law, Z-law, F)`.
///
/// Implementations must be pure given the generator state: the same stream
/// always produces the same draws.
pub trait InnerProblem: Send + Sync {
    type Outer: Debug + Send;
    type Inner;

    fn sample_outer(&self, rng: &mut StreamRng) -> Self::Outer;

    fn sample_inner(&self, rng: &mut StreamRng) -> Self::Inner;

    /// `F(y, z)`.
    fn inner_fn(&self, y: &Self::Outer, z: &Self::Inner) -> f64;

    /// `phi_0(y) = E[F(y, Z)]`, when known in closed form.
    fn conditional_mean(&self, _y: &Self::Outer) -> Option<f64> {
        None
    }

    /// `kappa_{2,y} = Var(F(y, Z))`, when known in closed form.
    fn conditional_variance(&self, _y: &Self::Outer) -> Option<f64> {
        None
    }
}

/// Problem assembled from plain closures.
pub struct FnProblem<Y, Z, SY, SZ, F> {
    outer: SY,
    inner: SZ,
    inner_fn: F,
    _types: std::marker::PhantomData<fn() -> (Y, Z)>,
}

impl<Y, Z, SY, SZ, F> FnProblem<Y, Z, SY, SZ, F>
where
    SY: Fn(&mut StreamRng) -> Y + Send + Sync,
    SZ: Fn(&mut StreamRng) -> Z + Send + Sync,
    F: Fn(&Y, &Z) -> f64 + Send + Sync,
{
    pub fn new(outer: SY, inner: SZ, inner_fn: F) -> Self {
        Self { outer, inner, inner_fn, _types: std::marker::PhantomData }
    }
}

impl<Y, Z, SY, SZ, F> InnerProblem for FnProblem<Y, Z, SY, SZ, F>
where
    Y: Debug + Send,
    SY: Fn(&mut StreamRng) -> Y + Send + Sync,
    SZ: Fn(&mut StreamRng) -> Z + Send + Sync,
    F: Fn(&Y, &Z) -> f64 + Send + Sync,
{
    type Outer = Y;
    type Inner = Z;

    fn sample_outer(&self, rng: &mut StreamRng) -> Y {
        (self.outer)(rng)
    }

    fn sample_inner(&self, rng: &mut StreamRng) -> Z {
        (self.inner)(rng)
    }

    fn inner_fn(&self, y: &Y, z: &Z) -> f64 {
        (self.inner_fn)(y, z)
    }
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type ScalarFn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Closed forms used by the rate checks. Every field is optional.
#[derive(Clone, Default)]
pub struct AnalyticOracles {
    /// `h -> E[f(X_h)]`; `h = 0` is the target.
    pub mean_payoff_at: Option<ScalarFn>,
    /// `E[f(X_0)]` for models that know only the target.
    pub target: Option<f64>,
    /// Density of `X_0`.
    pub density_x0: Option<ScalarFn>,
    /// `h -> sup_x f_{X_h}(x)`.
    pub density_sup: Option<ScalarFn>,
    /// `(h, x) -> P(X_h <= x)`.
    pub cdf_xh: Option<ScalarFn2>,
    /// First-order density correction `P_1`: `f_{X_h} = f_{X_0} (1 + h P_1) + ...`.
    pub p1: Option<ScalarFn>,
    /// `(h, h') -> ||X_h - X_{h'}||_2` under the nested (shared-prefix) coupling.
    pub strong_l2: Option<ScalarFn2>,
    /// `p -> ||Xi - E[Xi | Y]||_p`.
    pub inner_residual_norm: Option<ScalarFn>,
    /// Typical spread of `X_0`, used to scale tail quadratures.
    pub x0_scale: Option<f64>,
}

impl Debug for AnalyticOracles {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalyticOracles")
            .field("mean_payoff_at", &self.mean_payoff_at.is_some())
            .field("target", &self.target)
            .field("density_x0", &self.density_x0.is_some())
            .field("density_sup", &self.density_sup.is_some())
            .field("cdf_xh", &self.cdf_xh.is_some())
            .field("p1", &self.p1.is_some())
            .field("strong_l2", &self.strong_l2.is_some())
            .field("inner_residual_norm", &self.inner_residual_norm.is_some())
            .finish()
    }
}

pub struct NestedModel<P: InnerProblem> {
    pub name: String,
    pub problem: P,
    pub payoff: Payoff,
    pub oracles: AnalyticOracles,
    /// `p` such that `Xi = F(Y, Z)` is asserted to lie in `L^p`.
    pub moment_order: f64,
}

impl<P: InnerProblem> NestedModel<P> {
    pub fn new(name: impl Into<String>, problem: P, payoff: Payoff) -> Self {
        Self {
            name: name.into(),
            problem,
            payoff,
            oracles: AnalyticOracles::default(),
            moment_order: 2.0,
        }
    }

    pub fn with_oracles(mut self, oracles: AnalyticOracles) -> Self {
        self.oracles = oracles;
        self
    }

    pub fn with_moment_order(mut self, p: f64) -> Self {
        self.moment_order = p;
        self
    }

    /// Same sampler with a different payoff. Payoff-dependent oracles are dropped.
    pub fn with_payoff(self, payoff: Payoff) -> Self {
        let mut oracles = self.oracles;
        oracles.mean_payoff_at = None;
        oracles.target = None;
        Self { payoff, oracles, ..self }
    }

    /// `E[f(X_0)]` if an oracle provides it.
    pub fn target(&self) -> Option<f64> {
        match &self.oracles.mean_payoff_at {
            Some(m) => Some(m(0.0)),
            None => self.oracles.target,
        }
    }

    /// `E[f(X_h)]` if known in closed form.
    pub fn mean_payoff_at(&self, h: f64) -> Option<f64> {
        self.oracles.mean_payoff_at.as_ref().map(|m| m(h))
    }

    #[inline]
    pub(crate) fn payoff_checked(&self, x: f64) -> Result<f64> {
        let v = self.payoff.eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinitePayoff { x, value: v })
        }
    }
}

/// Sum of `F(y, Z_k)` over `count` consecutive draws of `rng`; `offset` is the
/// 1-based index of the first draw, for error reporting.
#[inline]
pub(crate) fn inner_sum<P: InnerProblem>(
    problem: &P,
    y: &P::Outer,
    count: u64,
    offset: u64,
    rng: &mut StreamRng,
) -> Result<f64> {
    let mut sum = 0.0;
    for k in 0..count {
        let z = problem.sample_inner(rng);
        let v = problem.inner_fn(y, &z);
        if !v.is_finite() {
            return Err(Error::Evaluation { y: format!("{y:?}"), k: offset + k, value: v });
        }
        sum += v;
    }
    Ok(sum)
}

/// `X_h = (1/K) sum_{k=1}^K F(y, Z_k)` with `Z_1, Z_2, ...` read in order from
/// the stream of `key`.
pub fn sample_inner_mean<P: InnerProblem>(
    model: &NestedModel<P>,
    y: &P::Outer,
    k: u64,
    key: StreamKey,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidInput("inner sample count K must be >= 1".into()));
    }
    let mut rng = key.rng();
    Ok(inner_sum(&model.problem, y, k, 1, &mut rng)? / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn constant_inner_function_returns_y() {
        let problem = FnProblem::new(|_r: &mut StreamRng| 2.5_f64, |r: &mut StreamRng| r.random::<f64>(), |y: &f64, _z: &f64| *y);
        let model = NestedModel::new("const", problem, Payoff::square());
        for k in [1, 3, 50] {
            let x = sample_inner_mean(&model, &2.5, k, StreamKey::root(3).child(k)).unwrap();
            assert_eq!(x, 2.5);
        }
        assert!(sample_inner_mean(&model, &2.5, 0, StreamKey::root(3)).is_err());
    }

    #[test]
    fn single_draw_is_f_of_first_z() {
        let model = builtin_gaussian_linear(0.0, 1.0, 0.5, Payoff::square()).unwrap();
        let key = StreamKey::root(11).child(4);
        let z: f64 = key.rng().sample(StandardNormal);
        let x = sample_inner_mean(&model, &1.25, 1, key).unwrap();
        assert_eq!(x, 1.25 + 0.5 * z);
    }

    #[test]
    fn non_finite_inner_value_reports_draw() {
        let problem = FnProblem::new(
            |_r: &mut StreamRng| 1.0_f64,
            |_r: &mut StreamRng| (),
            {
                let calls = std::sync::atomic::AtomicU64::new(0);
                move |_y: &f64, _z: &()| {
                    if calls.fetch_add(1, std::sync::atomic::Ordering::Relaxed) == 2 {
                        f64::NAN
                    } else {
                        1.0
                    }
                }
            },
        );
        let model = NestedModel::new("nan", problem, Payoff::square());
        match sample_inner_mean(&model, &1.0, 5, StreamKey::root(0)) {
            Err(Error::Evaluation { k, .. }) => assert_eq!(k, 3),
            other => panic!("expected evaluation error, got {other:?}"),
        }
    }
}
