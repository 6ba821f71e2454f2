use nestmlmc::model::{builtin_bs_nested, FnProblem, NestedModel, StreamRng};
use nestmlmc::rates::{
    cdf_expansion_check, fit_strong_rate, fit_weak_rate, indicator_strong_bound, inner_residual_norm, mz_constant,
    strong_bound_xh, BiasPath, WeakEstimator, WeakRateSpec,
};
use nestmlmc::stats::norm_pdf;
use nestmlmc::{
    builtin_gaussian_linear, BsParams, CouplingMode, Direction, Error, Executor, LevelGeometry, Payoff, StreamKey,
};
use rand::Rng;
use rand_distr::StandardNormal;

fn dyadic(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|i| 0.5f64.powi(i)).collect()
}

fn analytic(estimator: WeakEstimator, h_grid: Vec<f64>) -> WeakRateSpec {
    WeakRateSpec { estimator, path: BiasPath::Analytic, h_grid, reference: None }
}

#[test]
fn smooth_weak_rate_is_exact_on_analytic_path() {
    let sigma = 0.8;
    let model = builtin_gaussian_linear(0.2, 1.0, sigma, Payoff::square()).unwrap();
    let r = fit_weak_rate(&model, &analytic(WeakEstimator::Crude, dyadic(1, 6)), StreamKey::root(0), &Executor::sequential()).unwrap();
    assert!((r.alpha_hat.unwrap() - 1.0).abs() < 1e-10);
    assert!((r.c1_hat.unwrap() - sigma * sigma).abs() < 1e-10);
    let c = r.coefficients.unwrap();
    assert!((c[0] - sigma * sigma).abs() < 1e-9 && c[1].abs() < 1e-6);
    assert!(r.grid.windows(2).all(|w| w[0] > w[1]));
}

#[test]
fn indicator_weak_rate_on_analytic_path() {
    let model = builtin_gaussian_linear(0.0, 1.0, 1.0, Payoff::indicator(1.0, Direction::Below)).unwrap();
    let r = fit_weak_rate(&model, &analytic(WeakEstimator::Crude, dyadic(6, 11)), StreamKey::root(0), &Executor::sequential()).unwrap();
    let want = -norm_pdf(1.0) / 2.0;
    assert!((-0.120_99..=-0.120_98).contains(&want));
    assert!(((r.c1_hat.unwrap() - want) / want).abs() < 0.02, "{:?}", r.c1_hat);
    assert!((0.98..=1.02).contains(&r.alpha_hat.unwrap()));
    let c = r.coefficients.unwrap();
    assert!(((c[0] - want) / want).abs() < 1e-6);
}

#[test]
fn weighted_bias_gains_one_order() {
    let model = builtin_gaussian_linear(0.0, 1.0, 1.0, Payoff::indicator(1.0, Direction::Below)).unwrap();
    let exec = Executor::sequential();
    let r = fit_weak_rate(&model, &analytic(WeakEstimator::Ml2r { r: 2, m: 2, alpha: 1.0 }, dyadic(4, 10)), StreamKey::root(0), &exec).unwrap();
    assert!((1.8..=2.2).contains(&r.alpha_hat.unwrap()), "{:?}", r.alpha_hat);
}

#[test]
fn zero_bias_is_flagged() {
    let model = builtin_gaussian_linear(0.0, 1.0, 1.0, Payoff::affine(2.0, 1.0)).unwrap();
    let r = fit_weak_rate(&model, &analytic(WeakEstimator::Crude, dyadic(1, 5)), StreamKey::root(0), &Executor::sequential()).unwrap();
    assert!(r.inconclusive);
    assert!(r.alpha_hat.is_none() && r.c1_hat.is_none());
    assert!(r.require_exponent().is_err());
}

#[test]
fn weak_rate_rejects_bad_grids_and_missing_oracles() {
    let model = builtin_gaussian_linear(0.0, 1.0, 1.0, Payoff::square()).unwrap();
    let exec = Executor::sequential();
    assert!(fit_weak_rate(&model, &analytic(WeakEstimator::Crude, dyadic(1, 3)), StreamKey::root(0), &exec).is_err());
    assert!(fit_weak_rate(&model, &analytic(WeakEstimator::Crude, vec![]), StreamKey::root(0), &exec).is_err());
    let custom = Payoff::custom("cube", nestmlmc::PayoffKind::Smooth, |x| x * x * x, None, None).unwrap();
    let model = model.with_payoff(custom);
    assert!(matches!(
        fit_weak_rate(&model, &analytic(WeakEstimator::Crude, dyadic(1, 5)), StreamKey::root(0), &exec),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn monte_carlo_bias_matches_closed_form() {
    let model = builtin_gaussian_linear(0.0, 1.0, 1.0, Payoff::square()).unwrap();
    let spec = WeakRateSpec { estimator: WeakEstimator::Crude, path: BiasPath::MonteCarlo { n: 200_000 }, h_grid: dyadic(0, 3), reference: None };
    let r = fit_weak_rate(&model, &spec, StreamKey::root(8), &Executor::sequential()).unwrap();
    for row in &r.per_h {
        assert!((row.value - row.h).abs() <= 4.5 * row.stderr, "h={}: {} (se {})", row.h, row.value, row.stderr);
    }
    assert!(!r.inconclusive);
}

#[test]
fn paired_reference_bias_without_target() {
    // No oracle: bias is measured against h_ref = h_min / M^2 on shared draws.
    let model = builtin_gaussian_linear(0.0, 1.0, 1.0, Payoff::square())
        .unwrap()
        .with_payoff(Payoff::custom("square", nestmlmc::PayoffKind::Smooth, |x| x * x, None, None).unwrap());
    assert!(model.target().is_none());
    let spec = WeakRateSpec { estimator: WeakEstimator::Crude, path: BiasPath::MonteCarlo { n: 100_000 }, h_grid: dyadic(0, 3), reference: None };
    let r = fit_weak_rate(&model, &spec, StreamKey::root(2), &Executor::sequential()).unwrap();
    let h_ref = 0.125 / 4.0;
    for row in &r.per_h {
        let want = row.h - h_ref;
        assert!((row.value - want).abs() <= 4.5 * row.stderr, "h={}: {} vs {want}", row.h, row.value);
    }
    assert!((0.85..=1.15).contains(&r.alpha_hat.unwrap()), "{:?}", r.alpha_hat);
}

#[test]
fn strong_bound_ratio_on_gaussian_model() {
    let sigma = 0.6;
    let model = builtin_gaussian_linear(0.0, 1.0, sigma, Payoff::square()).unwrap();
    let exec = Executor::sequential();
    let (h, hp) = (0.25, 0.0625);
    let b = strong_bound_xh(&model, 2.0, h, hp, StreamKey::root(0), &exec).unwrap();
    let exact = model.oracles.strong_l2.as_ref().unwrap()(h, hp);
    assert!((b.value / exact - 72.0 * 2f64.sqrt()).abs() < 1e-9);
    assert!((b.value / exact - 101.8).abs() < 0.05);
    assert_eq!(strong_bound_xh(&model, 2.0, h, h, StreamKey::root(0), &exec).unwrap().value, 0.0);
    let half = strong_bound_xh(&model, 2.0, 0.125, 0.0625 / 2.0, StreamKey::root(0), &exec).unwrap();
    assert!((half.value / b.value - 0.5f64.sqrt()).abs() < 1e-12);
    assert!(strong_bound_xh(&model, 1.0, h, hp, StreamKey::root(0), &exec).is_err());
}

fn oracle_free_model() -> NestedModel<impl nestmlmc::InnerProblem<Outer = f64>> {
    // Y ~ N(0,1), F(y, Z) = y + (1 + |y|/2) Z; no conditional mean supplied.
    let problem = FnProblem::new(
        |r: &mut StreamRng| r.sample::<f64, _>(StandardNormal),
        |r: &mut StreamRng| r.sample::<f64, _>(StandardNormal),
        |y: &f64, z: &f64| y + (1.0 + 0.5 * y.abs()) * z,
    );
    NestedModel::new("heteroscedastic", problem, Payoff::positive_part()).with_moment_order(8.0)
}

#[test]
fn fallback_norm_dominates_true_residual_norm() {
    let model = oracle_free_model();
    let exec = Executor::sequential();
    let est = inner_residual_norm(&model, 2.0, 200_000, StreamKey::root(4), &exec).unwrap();
    // True ||Xi - E[Xi|Y]||_2^2 = E[(1 + |Y|/2)^2] = 1 + sqrt(2/pi) + 1/4.
    let truth = (1.25 + (2.0 / std::f64::consts::PI).sqrt()).sqrt();
    assert!(est.value >= truth - 4.0 * est.std_error, "{} vs {truth}", est.value);
    assert!(est.std_error > 0.0);
    assert!(matches!(inner_residual_norm(&model, 9.0, 100, StreamKey::root(4), &exec), Err(Error::Contract(_))));
}

#[test]
fn bounds_dominate_measurements() {
    let exec = Executor::sequential();
    let model = builtin_gaussian_linear(0.0, 1.0, 1.0, Payoff::indicator(1.0, Direction::Below)).unwrap();
    let sup = model.oracles.density_sup.clone().unwrap();
    for (kc, kf) in [(2u64, 4u64), (4, 16), (8, 64)] {
        let (h, hp) = (1.0 / kc as f64, 1.0 / kf as f64);
        let acc = nestmlmc::estimator::sample_coupled(&model, kc, kf, 50_000, StreamKey::root(kc), &exec, |_y, xc, xf| {
            (xf - xc).powi(2)
        })
        .unwrap();
        let l2 = acc.mean().sqrt();
        let bound = strong_bound_xh(&model, 2.0, h, hp, StreamKey::root(0), &exec).unwrap();
        assert!(l2 <= bound.value);

        let flips = nestmlmc::estimator::sample_coupled(&model, kc, kf, 50_000, StreamKey::root(kc + 1), &exec, |_y, xc, xf| {
            f64::from(u8::from((xc <= 1.0) != (xf <= 1.0)))
        })
        .unwrap();
        let delta = (h - hp).sqrt();
        let ib = indicator_strong_bound(2.0, sup(0.0), sup(h), delta).unwrap();
        assert!(flips.mean() <= ib + 4.0 * flips.std_error(), "{} vs {ib}", flips.mean());
    }

    let bs = builtin_bs_nested(BsParams::default(), 8.0).unwrap();
    let b = strong_bound_xh(&bs, 2.0, 0.25, 0.0625, StreamKey::root(5), &exec).unwrap();
    let acc = nestmlmc::estimator::sample_coupled(&bs, 4, 16, 20_000, StreamKey::root(6), &exec, |_y, xc, xf| (xf - xc).powi(2)).unwrap();
    assert!(acc.mean().sqrt() <= b.value - 4.0 * b.std_error);
}

#[test]
fn mz_examples() {
    assert!((mz_constant(2.0).unwrap() - 50.9117).abs() < 1e-4);
    assert!((mz_constant(5.0).unwrap() - 100.623).abs() < 1e-3);
}

#[test]
fn strong_slope_is_scale_invariant_and_ci_is_honest() {
    let exec = Executor::sequential();
    let g = LevelGeometry::new(2, 2, 6).unwrap();
    let base = builtin_gaussian_linear(0.0, 1.0, 1.0, Payoff::positive_part()).unwrap();
    let r1 = fit_strong_rate(&base, &g, CouplingMode::Standard, &[2, 3, 4, 5, 6], 8_000, StreamKey::root(3), &exec).unwrap();
    let scaled = builtin_gaussian_linear(0.0, 1.0, 1.0, Payoff::positive_part().scaled(7.5)).unwrap();
    let r2 = fit_strong_rate(&scaled, &g, CouplingMode::Standard, &[2, 3, 4, 5, 6], 8_000, StreamKey::root(3), &exec).unwrap();
    assert!((r1.beta_hat.unwrap() - r2.beta_hat.unwrap()).abs() < 1e-10);
    assert!((r2.v1_hat.unwrap() / r1.v1_hat.unwrap() - 56.25).abs() < 1e-8);
    let (lo, hi) = r1.exponent_ci.unwrap();
    assert!(lo < hi);

    let r4 = fit_strong_rate(&base, &g, CouplingMode::Standard, &[2, 3, 4, 5, 6], 16_000, StreamKey::root(3), &exec).unwrap();
    for (a, b) in r1.per_h.iter().zip(&r4.per_h) {
        let ratio = a.stderr / b.stderr;
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "h={}: ratio {ratio}", a.h);
    }
    assert!(fit_strong_rate(&base, &g, CouplingMode::Standard, &[2, 3, 4], 8_000, StreamKey::root(3), &exec).is_err());
}

#[test]
fn affine_antithetic_strong_fit_is_inconclusive() {
    let model = builtin_gaussian_linear(0.0, 1.0, 1.0, Payoff::affine(1.0, 0.0)).unwrap();
    let g = LevelGeometry::new(2, 2, 5).unwrap();
    let r = fit_strong_rate(&model, &g, CouplingMode::Antithetic, &[2, 3, 4, 5], 1_000, StreamKey::root(1), &Executor::sequential()).unwrap();
    assert!(r.inconclusive && r.beta_hat.is_none());
}

#[test]
fn cdf_expansion_first_order() {
    let (a, sigma) = (1.0, 1.0);
    let model = builtin_gaussian_linear(0.0, 1.0, sigma, Payoff::indicator(a, Direction::Below)).unwrap();
    let check = cdf_expansion_check(&model, &[-40.0, -1.0, 0.3, a], &dyadic(6, 10)).unwrap();
    let at_a = check.rows.iter().find(|r| r.x == a).unwrap();
    let want = -(sigma * sigma / 2.0) * a * norm_pdf(a);
    assert!(((at_a.coefficients[0] - want) / want).abs() < 0.005);
    assert!(((at_a.p1_integral - want) / want).abs() < 1e-8);
    assert!(at_a.first_order_rel_error.unwrap() < 0.005);
    let slope = at_a.remainder_slope.unwrap();
    assert!((1.4..=2.2).contains(&slope), "{slope}");
    let far = &check.rows[0];
    assert!(far.cdf0.abs() < 1e-300 && far.p1_integral.abs() < 1e-300 && far.coefficients[0].abs() < 1e-300);

    let bs = builtin_bs_nested(BsParams::default(), 8.0).unwrap();
    assert!(matches!(cdf_expansion_check(&bs, &[1.0], &dyadic(6, 10)), Err(Error::Unsupported(_))));
}
