use std::path::Path;

use nestmlmc::rates::{cdf_expansion_check, fit_strong_rate, fit_weak_rate, ExpansionCheck};
use nestmlmc::{
    estimate_crude, estimate_ml2r, estimate_mlmc, solve_weights, Allocation, CalibrationPlan, EstimateResult,
    EstimatorKind, Executor, InnerProblem, LevelGeometry, NestedModel, RateReport, StreamKey, WeakRateSpec,
    WeightSpec, WeightVector,
};
use serde::{Deserialize, Serialize};

use crate::auto::{self, Measured};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::models;
use crate::output;
use crate::with_model;

pub fn executor(cfg: &RunConfig) -> Result<Executor, CliError> {
    Ok(Executor::new(cfg.workers())?)
}

/// What one estimate needs once the source of the geometry is settled.
struct Setup {
    geometry: LevelGeometry,
    allocation: Allocation,
    weights: Option<WeightVector>,
}

fn run_setup<P: InnerProblem>(
    model: &NestedModel<P>,
    cfg: &RunConfig,
    family: EstimatorKind,
    s: &Setup,
    key: StreamKey,
    exec: &Executor,
) -> Result<EstimateResult, CliError> {
    let r = match family {
        EstimatorKind::Crude => {
            if s.geometry.r != 1 {
                return Err(CliError::config(format!("crude runs at depth 1, got r = {}", s.geometry.r)));
            }
            estimate_crude(model, s.geometry.k0, s.allocation.n, key, exec)?
        }
        EstimatorKind::Mlmc => estimate_mlmc(model, &s.geometry, &s.allocation, cfg.coupling, key, exec)?,
        EstimatorKind::Ml2r => {
            let w = s.weights.as_ref().ok_or_else(|| CliError::config("ML2R run without weights"))?;
            estimate_ml2r(model, &s.geometry, &s.allocation, w, cfg.coupling, key, exec)?
        }
    };
    Ok(r)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateOutput {
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Measured>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<CalibrationPlan>,
    pub result: EstimateResult,
}

pub fn run_estimate(cfg: &RunConfig) -> Result<EstimateOutput, CliError> {
    let explicit = cfg.geometry.is_some() || cfg.allocation.is_some();
    let sources = [explicit, cfg.epsilon.is_some(), cfg.plan.is_some()].iter().filter(|b| **b).count();
    if sources != 1 {
        return Err(CliError::config(
            "supply exactly one of geometry+allocation, epsilon, or plan",
        ));
    }
    let model = models::build(cfg)?;
    let exec = executor(cfg)?;
    let key = StreamKey::root(cfg.seed());
    let out = with_model!(&model, m => {
        let (setup, calibration, plan) = if explicit {
            (explicit_setup(cfg)?, None, None)
        } else if let Some(eps) = cfg.epsilon {
            let cal = cfg.calibration_or_default();
            let measured = auto::measure(m, &cal, cfg.coupling, cfg.seed(), &exec)?;
            let plan = auto::plan_for(m, &measured, &cal, cfg.estimator, eps, cfg.seed(), &exec)?;
            (setup_from_plan(&plan), Some(measured), Some(plan))
        } else {
            let plan = load_plan(cfg.plan.as_deref().expect("plan source"))?;
            if plan.family != cfg.estimator {
                return Err(CliError::config(format!(
                    "estimator {:?} does not match the plan family {:?}",
                    cfg.estimator, plan.family
                )));
            }
            (setup_from_plan(&plan), None, Some(plan))
        };
        let result = run_setup(m, cfg, cfg.estimator, &setup, key, &exec)?;
        EstimateOutput { config: cfg.clone(), calibration, plan, result }
    });
    for l in &out.result.levels {
        log::info!("level {}: K {}, N {}, mean {:.6e}, var {:.6e}", l.level, l.inner_count, l.n, l.mean, l.var);
    }
    let dir = cfg.output_dir();
    output::write_json(&dir, "result.json", &out)?;
    output::write_levels(output::create(&dir, "levels.csv")?, &out.result)?;
    Ok(out)
}

fn explicit_setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    let (Some(g), Some(a)) = (&cfg.geometry, &cfg.allocation) else {
        return Err(CliError::config("geometry and allocation must be given together"));
    };
    let geometry = LevelGeometry::new(g.k0, g.m, g.r)?;
    let allocation = match &a.q {
        Some(q) => Allocation::new(a.n, q.clone())?,
        None => Allocation::uniform(a.n, g.r)?,
    };
    let weights = match cfg.estimator {
        EstimatorKind::Ml2r => Some(solve_weights(&WeightSpec::new(cfg.alpha.unwrap_or(1.0), g.m, g.r)?)?),
        _ => None,
    };
    Ok(Setup { geometry, allocation, weights })
}

fn setup_from_plan(p: &CalibrationPlan) -> Setup {
    Setup { geometry: p.geometry, allocation: p.allocation.clone(), weights: p.weights.clone() }
}

/// Reads a plan, bare or as written by `calibrate`.
pub fn load_plan(path: &Path) -> Result<CalibrationPlan, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read plan {}: {e}", path.display())))?;
    #[derive(Deserialize)]
    struct Wrapped {
        plan: CalibrationPlan,
    }
    if let Ok(w) = serde_json::from_str::<Wrapped>(&text) {
        return Ok(w.plan);
    }
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("plan {}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatesOutput {
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak: Option<RateReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strong: Option<RateReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion: Option<ExpansionCheck>,
}

pub fn run_rates(cfg: &RunConfig) -> Result<RatesOutput, CliError> {
    let rc = cfg.rates.as_ref().ok_or_else(|| CliError::config("the rates subcommand needs a `rates` section"))?;
    if rc.weak.is_none() && rc.strong.is_none() && rc.expansion.is_none() {
        return Err(CliError::config("`rates` needs at least one of weak, strong, expansion"));
    }
    if let Some(w) = &rc.weak {
        if w.h_grid.is_empty() {
            return Err(CliError::config("rates.weak.h_grid is empty"));
        }
    }
    let model = models::build(cfg)?;
    let exec = executor(cfg)?;
    let root = StreamKey::root(cfg.seed());
    let mut out = RatesOutput { config: cfg.clone(), weak: None, strong: None, expansion: None };
    with_model!(&model, m => {
        if let Some(w) = &rc.weak {
            let spec = WeakRateSpec {
                estimator: w.estimator,
                path: w.path,
                h_grid: w.h_grid.clone(),
                reference: w.reference,
            };
            let r = fit_weak_rate(m, &spec, root.child(0), &exec)?;
            log::info!("weak: alpha_hat {:?}, c1_hat {:?}", r.alpha_hat, r.c1_hat);
            out.weak = Some(r);
        }
        if let Some(s) = &rc.strong {
            let depth = s.levels.iter().copied().max().unwrap_or(0);
            let g = LevelGeometry::new(s.k0, s.m, depth)?;
            let r = fit_strong_rate(m, &g, cfg.coupling, &s.levels, s.n, root.child(1), &exec)?;
            log::info!("strong: beta_hat {:?}, V1_hat {:?}", r.beta_hat, r.v1_hat);
            out.strong = Some(r);
        }
        if let Some(e) = &rc.expansion {
            out.expansion = Some(cdf_expansion_check(m, &e.x_grid, &e.h_grid)?);
        }
    });

    let dir = cfg.output_dir();
    output::write_json(&dir, "rates.json", &out)?;
    let mut rows = Vec::new();
    if let Some(r) = &out.weak {
        r.write_csv(output::create(&dir, "weak.csv")?)?;
        rows.push(("weak", r));
    }
    if let Some(r) = &out.strong {
        r.write_csv(output::create(&dir, "strong.csv")?)?;
        rows.push(("strong", r));
    }
    output::write_rate_summary(output::create(&dir, "rates.csv")?, &rows)?;
    if let Some(e) = &out.expansion {
        output::write_expansion(output::create(&dir, "expansion.csv")?, e)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrateOutput {
    pub config: RunConfig,
    pub calibration: Measured,
    pub plan: CalibrationPlan,
}

pub fn run_calibrate(cfg: &RunConfig) -> Result<CalibrateOutput, CliError> {
    let eps = cfg.epsilon.ok_or_else(|| CliError::config("calibrate needs `epsilon`"))?;
    let model = models::build(cfg)?;
    let exec = executor(cfg)?;
    let cal = cfg.calibration_or_default();
    let (measured, plan) = with_model!(&model, m => {
        let measured = auto::measure(m, &cal, cfg.coupling, cfg.seed(), &exec)?;
        let plan = auto::plan_for(m, &measured, &cal, cfg.estimator, eps, cfg.seed(), &exec)?;
        (measured, plan)
    });
    log::info!(
        "plan: R {}, N {}, predicted cost {:.4e}",
        plan.geometry.r,
        plan.allocation.n,
        plan.predicted_cost
    );
    let out = CalibrateOutput { config: cfg.clone(), calibration: measured, plan };
    output::write_json(&cfg.output_dir(), "plan.json", &out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub family: EstimatorKind,
    pub epsilon: f64,
    /// Empirical RMSE against the closed-form target; NaN when not simulated.
    pub rmse: f64,
    /// Realized cost per replication (planned cost when not simulated).
    pub cost: f64,
    pub cost_ratio_vs_crude: f64,
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutput {
    pub config: RunConfig,
    pub calibration: Measured,
    pub rows: Vec<SweepRow>,
}

fn family_index(f: EstimatorKind) -> u64 {
    match f {
        EstimatorKind::Crude => 0,
        EstimatorKind::Mlmc => 1,
        EstimatorKind::Ml2r => 2,
    }
}

fn family_name(f: EstimatorKind) -> &'static str {
    match f {
        EstimatorKind::Crude => "crude",
        EstimatorKind::Mlmc => "mlmc",
        EstimatorKind::Ml2r => "ml2r",
    }
}

pub fn run_sweep(cfg: &RunConfig) -> Result<SweepOutput, CliError> {
    let sc = cfg.sweep.as_ref().ok_or_else(|| CliError::config("the sweep subcommand needs a `sweep` section"))?;
    sc.validate()?;
    let model = models::build(cfg)?;
    let exec = executor(cfg)?;
    let cal = cfg.calibration_or_default();
    let root = StreamKey::root(cfg.seed());
    let (measured, rows) = with_model!(&model, m => {
        let target = m
            .target()
            .ok_or_else(|| CliError::config("sweep needs a model with a closed-form target"))?;
        let measured = auto::measure(m, &cal, cfg.coupling, cfg.seed(), &exec)?;
        let mut rows = Vec::new();
        for (e, &eps) in sc.epsilons.iter().enumerate() {
            let crude = auto::plan_for(m, &measured, &cal, EstimatorKind::Crude, eps, cfg.seed(), &exec);
            let crude_cost = crude.as_ref().map_or(f64::NAN, |p| p.predicted_cost);
            for &family in &sc.families {
                let key = root.child(e as u64).child(family_index(family));
                let plan = match family {
                    EstimatorKind::Crude => crude.as_ref().map(Clone::clone).map_err(|e| CliError::config(e.to_string())),
                    _ => auto::plan_for(m, &measured, &cal, family, eps, cfg.seed(), &exec),
                };
                let row = sweep_point(m, cfg, plan, family, eps, target, crude_cost, key, &exec);
                log::info!(
                    "sweep {} eps {eps:e}: rmse {:.4e}, cost {:.4e}, ratio {:.4}, {}",
                    family_name(family),
                    row.rmse,
                    row.cost,
                    row.cost_ratio_vs_crude,
                    row.status
                );
                rows.push(row);
            }
        }
        (measured, rows)
    });
    let out = SweepOutput { config: cfg.clone(), calibration: measured, rows };
    let dir = cfg.output_dir();
    output::write_json(&dir, "sweep.json", &out)?;
    write_sweep_csv(&dir.join("sweep.csv"), &out.rows)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn sweep_point<P: InnerProblem>(
    model: &NestedModel<P>,
    cfg: &RunConfig,
    plan: Result<CalibrationPlan, CliError>,
    family: EstimatorKind,
    eps: f64,
    target: f64,
    crude_cost: f64,
    key: StreamKey,
    exec: &Executor,
) -> SweepRow {
    let sc = cfg.sweep.as_ref().expect("sweep section");
    let mut row = SweepRow {
        family,
        epsilon: eps,
        rmse: f64::NAN,
        cost: f64::NAN,
        cost_ratio_vs_crude: f64::NAN,
        status: "ok".into(),
    };
    let plan = match plan {
        Ok(p) => p,
        Err(e) => {
            row.status = format!("calibration_failed: {e}");
            return row;
        }
    };
    row.cost = plan.predicted_cost;
    row.cost_ratio_vs_crude = plan.predicted_cost / crude_cost;
    if family == EstimatorKind::Crude && plan.predicted_cost * sc.replications as f64 > sc.crude_budget {
        row.status = "rmse_not_simulated".into();
        return row;
    }
    let setup = setup_from_plan(&plan);
    let mut sq = 0.0;
    let mut cost = 0.0;
    for rep in 0..sc.replications {
        match run_setup(model, cfg, family, &setup, key.child(rep as u64), exec) {
            Ok(r) => {
                sq += (r.value - target).powi(2);
                cost += r.total_cost;
            }
            Err(e) => {
                row.status = format!("run_failed: {e}");
                return row;
            }
        }
    }
    let reps = sc.replications as f64;
    row.rmse = (sq / reps).sqrt();
    row.cost = cost / reps;
    row.cost_ratio_vs_crude = row.cost / crude_cost;
    row
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    use std::io::Write;
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("sweep.csv");
    let mut w = output::create(dir, name)?;
    writeln!(w, "{}", output::SWEEP_HEADER)?;
    for r in rows {
        // Free-text status may contain commas.
        let status = r.status.replace(',', ";");
        writeln!(
            w,
            "{},{},{},{},{},{}",
            family_name(r.family),
            output::num(r.epsilon),
            output::num(r.rmse),
            output::num(r.cost),
            output::num(r.cost_ratio_vs_crude),
            status
        )?;
    }
    w.flush()?;
    Ok(())
}
