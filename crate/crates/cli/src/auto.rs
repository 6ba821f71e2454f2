//! Rate measurement feeding the calibrator: a pilot run for the level
//! variances, a weak-rate fit for `alpha` and `c1`, and a power-law fit of the
//! pilot variances for `beta`.

use nestmlmc::rates::{fit_weak_rate, BiasPath, WeakEstimator};
use nestmlmc::stats::fit_power_law;
use nestmlmc::{
    plan, run_pilot, CalibrationInput, CalibrationPlan, CouplingMode, Error, EstimatorKind, Executor, InnerProblem,
    LevelGeometry, NestedModel, PilotStats, StreamKey, WeakRateSpec,
};
use serde::{Deserialize, Serialize};

use crate::config::CalibrationConfig;
use crate::error::CliError;

pub const PILOT_SALT: u64 = 0x0070_696c_6f74;
pub const WEAK_SALT: u64 = 0x7765_616b;
pub const CRUDE_SALT: u64 = 0x0063_7275_6465;

const ANALYTIC_POINTS: usize = 6;
// The analytic grid starts this many levels below `1/K0`, where the bias is
// closer to its leading term; the points cost nothing.
const ANALYTIC_OFFSET: i32 = 2;
const MC_POINTS: usize = 4;

/// Where a calibration input came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Config,
    Analytic,
    MonteCarlo,
    Pilot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateInputs {
    pub alpha: f64,
    pub c1: f64,
    pub beta: f64,
    pub v1: Option<f64>,
    pub alpha_source: Source,
    pub beta_source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub inputs: RateInputs,
    pub pilot: PilotStats,
}

pub fn measure<P: InnerProblem>(
    model: &NestedModel<P>,
    cal: &CalibrationConfig,
    coupling: CouplingMode,
    seed: u64,
    exec: &Executor,
) -> Result<Measured, CliError> {
    let root = StreamKey::root(seed);
    let geometry = LevelGeometry::new(cal.k0, cal.m, cal.pilot_levels)?;
    let pilot = run_pilot(model, &geometry, coupling, cal.pilot_n, root.reseeded(PILOT_SALT), exec)?;
    for (j, v) in pilot.variances.iter().enumerate() {
        log::info!("pilot level {}: var {v:.6e}, mean {:.6e}", j + 1, pilot.means[j]);
    }

    let (alpha, c1, alpha_source) = match (cal.alpha, cal.c1) {
        (Some(a), Some(c)) => (a, c, Source::Config),
        _ => {
            let (report, source) = weak_fit(model, cal, root.reseeded(WEAK_SALT), exec)?;
            let alpha_hat = report.require_exponent().map_err(|e| refuse_rate("alpha", e))?;
            let c1_hat = report.c1_hat.ok_or_else(|| CliError::config("weak fit returned no c1"))?;
            log::info!("weak fit: alpha_hat {alpha_hat:.6}, c1_hat {c1_hat:.6e}");
            (cal.alpha.unwrap_or(alpha_hat), cal.c1.unwrap_or(c1_hat), source)
        }
    };

    let (beta, v1, beta_source) = match cal.beta {
        Some(b) => (b, cal.v1, Source::Config),
        None => {
            let (b, v) = pilot_beta(&pilot, &geometry)?;
            log::info!("pilot fit: beta_hat {b:.4}, V1_hat {v:.4e}");
            (b, cal.v1.or(Some(v)), Source::Pilot)
        }
    };
    Ok(Measured { inputs: RateInputs { alpha, c1, beta, v1, alpha_source, beta_source }, pilot })
}

fn refuse_rate(what: &str, e: Error) -> CliError {
    CliError::config(format!("{e}; set calibration.{what} explicitly"))
}

fn weak_fit<P: InnerProblem>(
    model: &NestedModel<P>,
    cal: &CalibrationConfig,
    key: StreamKey,
    exec: &Executor,
) -> Result<(nestmlmc::RateReport, Source), CliError> {
    let h0 = 1.0 / cal.k0 as f64;
    let m = cal.m as f64;
    let (path, points, offset, source) = if model.mean_payoff_at(h0).is_some() {
        (BiasPath::Analytic, ANALYTIC_POINTS, ANALYTIC_OFFSET, Source::Analytic)
    } else {
        (BiasPath::MonteCarlo { n: cal.weak_n }, MC_POINTS, 0, Source::MonteCarlo)
    };
    let spec = WeakRateSpec {
        estimator: WeakEstimator::Crude,
        path,
        h_grid: (0..points).map(|i| h0 / m.powi(i as i32 + offset)).collect(),
        reference: None,
    };
    Ok((fit_weak_rate(model, &spec, key, exec)?, source))
}

/// `V_j = V1 |h_{j-1} - h_j|^beta` over the correction levels of the pilot.
fn pilot_beta(pilot: &PilotStats, g: &LevelGeometry) -> Result<(f64, f64), CliError> {
    let (dh, v): (Vec<f64>, Vec<f64>) = (2..=pilot.variances.len())
        .map(|j| (g.h_level(j - 1) - g.h_level(j), pilot.variances[j - 1]))
        .filter(|(_, v)| *v > 0.0)
        .unzip();
    if dh.len() < 2 {
        return Err(CliError::config(
            "pilot has fewer than two non-degenerate correction levels; set calibration.beta or raise pilot_levels",
        ));
    }
    let fit = fit_power_law(&dh, &v, None).map_err(|e| refuse_rate("beta", e))?;
    Ok((fit.exponent, fit.coefficient))
}

fn input(measured: &Measured, cal: &CalibrationConfig, family: EstimatorKind, epsilon: f64) -> CalibrationInput {
    let r = &measured.inputs;
    CalibrationInput {
        epsilon,
        alpha: r.alpha,
        c1: r.c1,
        beta: r.beta,
        v1: r.v1,
        m: cal.m,
        k0: cal.k0,
        family,
        pilot: Some(measured.pilot.clone()),
        c_inf: cal.c_inf,
    }
}

/// Plan from the measured rates alone. For the crude family the variance is
/// the one at `K0`; see [`plan_for`].
pub fn make_plan(
    measured: &Measured,
    cal: &CalibrationConfig,
    family: EstimatorKind,
    epsilon: f64,
) -> Result<CalibrationPlan, CliError> {
    Ok(plan(&input(measured, cal, family, epsilon))?)
}

/// Like [`make_plan`], but a crude plan gets its variance from a second pilot
/// at the inner count it settles on, instead of the coarse level `K0`.
pub fn plan_for<P: InnerProblem>(
    model: &NestedModel<P>,
    measured: &Measured,
    cal: &CalibrationConfig,
    family: EstimatorKind,
    epsilon: f64,
    seed: u64,
    exec: &Executor,
) -> Result<CalibrationPlan, CliError> {
    let first = make_plan(measured, cal, family, epsilon)?;
    let k = first.geometry.k0;
    if family != EstimatorKind::Crude || k == cal.k0 {
        return Ok(first);
    }
    let g = LevelGeometry::new(k, cal.m, 1)?;
    let key = StreamKey::root(seed).reseeded(CRUDE_SALT).child(k);
    let pilot = run_pilot(model, &g, measured.pilot.coupling, cal.pilot_n, key, exec)?;
    log::info!("crude pilot at K {k}: var {:.6e}", pilot.variances[0]);
    let mut inp = input(measured, cal, family, epsilon);
    inp.k0 = k;
    inp.pilot = Some(pilot);
    Ok(plan(&inp)?)
}
