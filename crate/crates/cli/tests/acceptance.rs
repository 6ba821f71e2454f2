//! Acceptance criteria 1-9. Prints one `[PASS]`/`[FAIL]` line per criterion
//! and exits non-zero if any fails. Tolerances and runtime budgets are the
//! published ones; do not relax them here.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nestmlmc::bell::{complete_bell, moments_from_cumulants, partial_bell, CumulantVector, PartialBellIndex};
use nestmlmc::estimator::sample_coupled;
use nestmlmc::rates::{fit_strong_rate, fit_weak_rate, indicator_strong_bound, strong_bound_xh, BiasPath, WeakEstimator};
use nestmlmc::stats::norm_pdf;
use nestmlmc::weights::residual_bias_factor;
use nestmlmc::{
    builtin_bs_nested, builtin_gaussian_linear, solve_weights, BsParams, CouplingMode, Direction, Executor,
    LevelGeometry, Payoff, StreamKey, WeakRateSpec, WeightSpec,
};
use serde_json::Value;
use tempfile::TempDir;

type Check = Result<String, String>;
type Criterion = (u8, &'static str, Duration, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dyadic(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|i| 0.5f64.powi(i)).collect()
}

// ---------------------------------------------------------------- 1. Bell

/// Block sizes of every set partition of an `n`-set.
fn partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(i: usize, n: usize, blocks: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(blocks.clone());
            return;
        }
        for b in 0..blocks.len() {
            blocks[b] += 1;
            grow(i + 1, n, blocks, out);
            blocks[b] -= 1;
        }
        blocks.push(1);
        grow(i + 1, n, blocks, out);
        blocks.pop();
    }
    let mut out = Vec::new();
    grow(0, n, &mut Vec::new(), &mut out);
    out
}

fn criterion_1() -> Check {
    let mut worst: f64 = 0.0;
    for n in 1..=8 {
        let x: Vec<f64> = (0..n).map(|i| 0.37 * (i as f64 + 1.0) - 0.9 + 0.05 * n as f64).collect();
        let parts = partitions(n);
        let mut complete = 0.0;
        for k in 1..=n {
            let want: f64 = parts
                .iter()
                .filter(|p| p.len() == k)
                .map(|p| p.iter().map(|s| x[s - 1]).product::<f64>())
                .sum();
            complete += want;
            let got = partial_bell(PartialBellIndex::new(n, k).unwrap(), &x[..n - k + 1]).map_err(|e| e.to_string())?;
            let rel = (got - want).abs() / want.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
            ensure(rel <= 1e-12, || format!("B_{{{n},{k}}} = {got}, partitions give {want}"))?;
        }
        let got = complete_bell(n, &x).map_err(|e| e.to_string())?;
        let rel = (got - complete).abs() / complete.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        ensure(rel <= 1e-12, || format!("B_{n} = {got}, partitions give {complete}"))?;
    }
    let poisson = moments_from_cumulants(&CumulantVector::new(vec![1.0; 4]).unwrap(), 4).map_err(|e| e.to_string())?;
    ensure(poisson == [1.0, 2.0, 5.0, 15.0], || format!("Poisson(1) moments {poisson:?}"))?;
    let normal =
        moments_from_cumulants(&CumulantVector::new(vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap(), 6).map_err(|e| e.to_string())?;
    ensure(normal == [0.0, 1.0, 0.0, 3.0, 0.0, 15.0], || format!("N(0,1) moments {normal:?}"))?;
    Ok(format!("worst relative error {worst:.1e}"))
}

// ---------------------------------------------------------------- 2. weights

fn criterion_2() -> Check {
    let mut worst: f64 = 0.0;
    for alpha in [0.5, 1.0, 2.0] {
        for m in [2u64, 3, 4] {
            for r in 1..=8 {
                let spec = WeightSpec::new(alpha, m, r).map_err(|e| e.to_string())?;
                let wv = solve_weights(&spec).map_err(|e| e.to_string())?;
                for p in 0..r {
                    // Nodes built here, independent of the solver.
                    let s: f64 = (0..r).map(|j| wv.w[j] * (m as f64).powf(-(j as f64) * alpha * p as f64)).sum();
                    let res = (s - f64::from(u8::from(p == 0))).abs();
                    worst = worst.max(res);
                    ensure(res <= 1e-10, || format!("residual {res:e} at alpha={alpha} M={m} R={r} p={p}"))?;
                }
            }
        }
    }
    // E[Y_h] = c0 + sum_{i<R} c_i h^{alpha i} + c_R h^{alpha R}: the weights
    // return c0 plus exactly w~ c_R h^{alpha R}.
    let c = [0.7, -1.3, 2.1, 0.4, -0.9, 1.7, 0.25, -0.6, 0.8];
    let h = 0.5;
    let mut kill: f64 = 0.0;
    for alpha in [0.5, 1.0, 2.0] {
        for m in [2u64, 3, 4] {
            for r in 1..=8 {
                let spec = WeightSpec::new(alpha, m, r).unwrap();
                let wv = solve_weights(&spec).unwrap();
                let value: f64 = (0..r)
                    .map(|j| {
                        let hj = h / (m as f64).powi(j as i32);
                        wv.w[j] * (0..=r).map(|i| c[i] * hj.powf(alpha * i as f64)).sum::<f64>()
                    })
                    .sum();
                let wt = residual_bias_factor(&wv, &spec).unwrap();
                let want = c[0] + wt * c[r] * h.powf(alpha * r as f64);
                let err = (value - want).abs();
                kill = kill.max(err);
                ensure(err <= 1e-9, || format!("bias killing off by {err:e} at alpha={alpha} M={m} R={r}"))?;
            }
        }
    }
    Ok(format!("max residual {worst:.1e}, max bias-killing error {kill:.1e}"))
}

// ---------------------------------------------------------------- 3-5. weak rates

fn criterion_3() -> Check {
    let sigma = 1.3;
    let model = builtin_gaussian_linear(0.0, 1.0, sigma, Payoff::square()).unwrap();
    let spec = WeakRateSpec { estimator: WeakEstimator::Crude, path: BiasPath::Analytic, h_grid: dyadic(1, 6), reference: None };
    let r = fit_weak_rate(&model, &spec, StreamKey::root(0), &Executor::sequential()).map_err(|e| e.to_string())?;
    let (a, c) = (r.alpha_hat.ok_or("no alpha_hat")?, r.c1_hat.ok_or("no c1_hat")?);
    ensure((a - 1.0).abs() <= 1e-6, || format!("alpha_hat = {a}"))?;
    ensure((c - sigma * sigma).abs() <= 1e-6, || format!("c1_hat = {c}, want {}", sigma * sigma))?;
    Ok(format!("alpha_hat = {a:.9}, c1_hat = {c:.9} (sigma^2 = {:.2})", sigma * sigma))
}

fn criterion_4() -> Check {
    let (a, sigma) = (1.0, 1.0);
    let model = builtin_gaussian_linear(0.0, 1.0, sigma, Payoff::indicator(a, Direction::Below)).unwrap();
    let exec = Executor::new(8).unwrap();
    let want = -a * norm_pdf(a) * sigma * sigma / 2.0;
    let spec = WeakRateSpec { estimator: WeakEstimator::Crude, path: BiasPath::Analytic, h_grid: dyadic(6, 11), reference: None };
    let r = fit_weak_rate(&model, &spec, StreamKey::root(0), &exec).map_err(|e| e.to_string())?;
    let c = r.c1_hat.ok_or("no c1_hat")?;
    let rel = ((c - want) / want).abs();
    ensure(rel <= 0.02, || format!("analytic c1_hat = {c}, want {want} (rel {rel:.3})"))?;

    let grid = dyadic(1, 4);
    let spec = WeakRateSpec {
        estimator: WeakEstimator::Crude,
        path: BiasPath::MonteCarlo { n: 1_000_000 },
        h_grid: grid,
        reference: None,
    };
    let mc = fit_weak_rate(&model, &spec, StreamKey::root(44), &exec).map_err(|e| e.to_string())?;
    let target = model.target().unwrap();
    let mut worst: f64 = 0.0;
    for row in &mc.per_h {
        let exact = model.mean_payoff_at(row.h).unwrap() - target;
        let z = (row.value - exact).abs() / row.stderr;
        worst = worst.max(z);
        ensure(z <= 4.0, || format!("MC bias at h = {}: {} vs {exact} ({z:.2} se)", row.h, row.value))?;
    }
    Ok(format!("c1_hat = {c:.6} vs {want:.6} (rel {rel:.2e}); MC points within {worst:.2} se"))
}

fn criterion_5() -> Check {
    let model = builtin_gaussian_linear(0.0, 1.0, 1.0, Payoff::indicator(1.0, Direction::Below)).unwrap();
    let exec = Executor::sequential();
    let fit = |estimator| -> Result<f64, String> {
        let spec = WeakRateSpec { estimator, path: BiasPath::Analytic, h_grid: dyadic(4, 10), reference: None };
        let r = fit_weak_rate(&model, &spec, StreamKey::root(0), &exec).map_err(|e| e.to_string())?;
        r.alpha_hat.ok_or_else(|| format!("no slope: {:?}", r.reason))
    };
    let weighted = fit(WeakEstimator::Ml2r { r: 2, m: 2, alpha: 1.0 })?;
    let plain = fit(WeakEstimator::Crude)?;
    ensure((1.8..=2.2).contains(&weighted), || format!("weighted slope {weighted}"))?;
    ensure((0.98..=1.02).contains(&plain), || format!("unweighted slope {plain}"))?;
    Ok(format!("weighted slope {weighted:.4}, unweighted slope {plain:.4}"))
}

// ---------------------------------------------------------------- 6. strong rates

fn criterion_6() -> Check {
    let exec = Executor::new(8).unwrap();
    let g = LevelGeometry::new(4, 2, 6).unwrap();
    let levels = [2, 3, 4, 5, 6];
    let n = 100_000;
    let beta = |payoff: Payoff, mode, seed| -> Result<f64, String> {
        let model = builtin_gaussian_linear(0.0, 1.0, 1.0, payoff).unwrap();
        let r = fit_strong_rate(&model, &g, mode, &levels, n, StreamKey::root(seed), &exec).map_err(|e| e.to_string())?;
        r.beta_hat.ok_or_else(|| format!("inconclusive: {:?}", r.reason))
    };
    let lip = beta(Payoff::positive_part(), CouplingMode::Standard, 61)?;
    let anti = beta(Payoff::square(), CouplingMode::Antithetic, 62)?;
    let ind = beta(Payoff::indicator(1.0, Direction::Below), CouplingMode::Standard, 63)?;
    ensure((0.85..=1.15).contains(&lip), || format!("Lipschitz beta_hat {lip}"))?;
    ensure((1.8..=2.2).contains(&anti), || format!("antithetic x^2 beta_hat {anti}"))?;
    ensure((0.35..=0.65).contains(&ind) && ind >= 1.0 / 3.0, || format!("indicator beta_hat {ind}"))?;
    Ok(format!("Lipschitz {lip:.3}, antithetic x^2 {anti:.3}, indicator {ind:.3}"))
}

// ---------------------------------------------------------------- 7. bounds

fn criterion_7() -> Check {
    let exec = Executor::new(8).unwrap();
    let a = 1.0;
    let model = builtin_gaussian_linear(0.0, 1.0, 1.0, Payoff::indicator(a, Direction::Below)).unwrap();
    let sup = model.oracles.density_sup.clone().ok_or("no density bound")?;
    let mut probes = 0;
    let mut tightest: f64 = 0.0;
    for (kc, kf) in [(2u64, 4u64), (4, 16), (8, 64), (16, 32), (32, 256)] {
        let (h, hp) = (1.0 / kc as f64, 1.0 / kf as f64);
        let l2 = sample_coupled(&model, kc, kf, 100_000, StreamKey::root(700 + kc), &exec, |_y, xc, xf| (xf - xc).powi(2))
            .map_err(|e| e.to_string())?
            .mean()
            .sqrt();
        let bound = strong_bound_xh(&model, 2.0, h, hp, StreamKey::root(0), &exec).map_err(|e| e.to_string())?.value;
        ensure(l2 <= bound, || format!("||X_h - X_h'||_2 = {l2} exceeds {bound} at ({kc}, {kf})"))?;
        tightest = tightest.max(l2 / bound);

        let flips = sample_coupled(&model, kc, kf, 100_000, StreamKey::root(800 + kc), &exec, |_y, xc, xf| {
            f64::from(u8::from((xc <= a) != (xf <= a)))
        })
        .map_err(|e| e.to_string())?
        .mean();
        let ib = indicator_strong_bound(2.0, sup(0.0), sup(h), (h - hp).sqrt()).map_err(|e| e.to_string())?;
        ensure(flips <= ib, || format!("indicator L2^2 distance {flips} exceeds {ib} at ({kc}, {kf})"))?;
        tightest = tightest.max(flips / ib);
        probes += 2;
    }
    let bs = builtin_bs_nested(BsParams::default(), 8.0).unwrap();
    for (kc, kf) in [(4u64, 16u64), (8, 32)] {
        let b = strong_bound_xh(&bs, 2.0, 1.0 / kc as f64, 1.0 / kf as f64, StreamKey::root(900 + kc), &exec)
            .map_err(|e| e.to_string())?;
        let l2 = sample_coupled(&bs, kc, kf, 50_000, StreamKey::root(950 + kc), &exec, |_y, xc, xf| (xf - xc).powi(2))
            .map_err(|e| e.to_string())?
            .mean()
            .sqrt();
        ensure(l2 <= b.value, || format!("BS ||X_h - X_h'||_2 = {l2} exceeds {}", b.value))?;
        tightest = tightest.max(l2 / b.value);
        probes += 1;
    }
    Ok(format!("{probes} probes, largest measured/bound ratio {tightest:.3}"))
}

// ---------------------------------------------------------------- 8-9. CLI

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn nestmlmc(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_nestmlmc"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("NESTMLMC_WORKERS")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.success(), || format!("{args:?} failed: {}", String::from_utf8_lossy(&o.stderr)))
}

fn criterion_8() -> Check {
    let tmp = TempDir::new().map_err(|e| e.to_string())?;
    let out = tmp.path().join("sweep");
    let cfg = configs().join("sweep_square.json");
    nestmlmc(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", "8"])?;
    let csv = fs::read_to_string(out.join("sweep.csv")).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<String>> = csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect();
    let mut summary = Vec::new();
    for family in ["mlmc", "ml2r"] {
        let mine: Vec<&Vec<String>> = rows.iter().filter(|r| r[0] == family).collect();
        ensure(mine.len() == 3, || format!("{family}: {} rows", mine.len()))?;
        let mut last_ratio = f64::INFINITY;
        for r in mine {
            let eps: f64 = r[1].parse().unwrap();
            let rmse: f64 = r[2].parse().unwrap();
            let ratio: f64 = r[4].parse().unwrap();
            ensure(r[5] == "ok", || format!("{family} at {eps}: {}", r[5]))?;
            ensure(rmse <= 1.5 * eps, || format!("{family} at {eps}: rmse {rmse}"))?;
            ensure(ratio < 1.0, || format!("{family} at {eps}: cost ratio {ratio}"))?;
            ensure(ratio < last_ratio, || format!("{family}: ratio {ratio} at {eps} does not improve on {last_ratio}"))?;
            last_ratio = ratio;
            summary.push(format!("{family}@{eps:e}: rmse/eps {:.2}, ratio {ratio:.3}", rmse / eps));
        }
    }
    Ok(summary.join("; "))
}

/// A result document minus the fields that legitimately differ between runs
/// of the same experiment (worker count, output directory).
fn strip_run_fields(mut v: Value) -> Value {
    if let Some(c) = v.get_mut("config").and_then(Value::as_object_mut) {
        c.remove("workers");
        c.remove("output");
    }
    v
}

fn criterion_9() -> Check {
    let tmp = TempDir::new().map_err(|e| e.to_string())?;
    let cases = [
        ("estimate", "estimate_mlmc_square.json", "result.json"),
        ("estimate", "estimate_auto_indicator.json", "result.json"),
        ("estimate", "estimate_bs_ml2r.json", "result.json"),
        ("rates", "rates_strong_indicator.json", "rates.json"),
        ("sweep", "sweep_indicator_ml2r.json", "sweep.json"),
    ];
    for (sub, preset, file) in cases {
        let first = tmp.path().join(format!("{preset}-first"));
        let cfg = configs().join(preset);
        nestmlmc(&[sub, "--config", cfg.to_str().unwrap(), "--out", first.to_str().unwrap(), "--workers", "1"])?;
        let original = first.join(file);
        let text = fs::read_to_string(&original).map_err(|e| e.to_string())?;
        let reference: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        for workers in ["1", "8"] {
            let again = tmp.path().join(format!("{preset}-{workers}"));
            nestmlmc(&[sub, "--config", original.to_str().unwrap(), "--out", again.to_str().unwrap(), "--workers", workers])?;
            let rerun_text = fs::read_to_string(again.join(file)).map_err(|e| e.to_string())?;
            let rerun: Value = serde_json::from_str(&rerun_text).map_err(|e| e.to_string())?;
            ensure(strip_run_fields(rerun) == strip_run_fields(reference.clone()), || {
                format!("{preset} rerun at {workers} workers differs from the original")
            })?;
            if workers == "1" {
                ensure(rerun_text.replace(again.to_str().unwrap(), "") == text.replace(first.to_str().unwrap(), ""), || {
                    format!("{preset} rerun is not byte-identical")
                })?;
            }
        }
    }
    Ok(format!("{} result files rerun from their embedded configs at 1 and 8 workers", cases.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "Bell suite", Duration::from_secs(1), criterion_1),
        (2, "weight suite", Duration::from_secs(1), criterion_2),
        (3, "weak rate, smooth", Duration::from_secs(1), criterion_3),
        (4, "weak rate, indicator", Duration::from_secs(120), criterion_4),
        (5, "higher-order weighting", Duration::from_secs(1), criterion_5),
        (6, "strong rates", Duration::from_secs(180), criterion_6),
        (7, "bound domination", Duration::from_secs(60), criterion_7),
        (8, "end-to-end economics", Duration::from_secs(300), criterion_8),
        (9, "determinism", Duration::MAX, criterion_9),
    ];
    let only: Option<u8> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > budget => Err(format!("{msg}; took {elapsed:.2?}, budget {budget:.0?}")),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("[PASS] criterion {id} ({name}): {msg} [{elapsed:.2?}]"),
            Err(msg) => {
                failed += 1;
                println!("[FAIL] criterion {id} ({name}): {msg} [{elapsed:.2?}]");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
